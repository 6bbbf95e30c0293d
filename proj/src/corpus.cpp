#include "triage/corpus.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <unordered_set>

#include "json.hpp"
#include "triage/errors.hpp"
#include "triage/text.hpp"

namespace triage {
namespace {

using json = nlohmann::json;

std::string trim(std::string_view s) {
  const auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
           c == '\v';
  };
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

// RFC-4180 record reader. Returns false at end of input. Quoted fields may
// contain commas, doubled quotes and line breaks.
bool read_csv_record(std::istream& in, std::vector<std::string>& fields,
                     std::size_t record) {
  fields.clear();
  int c = in.get();
  if (c == EOF) return false;
  std::string field;
  bool quoted = false;
  bool after_quote = false;
  bool any = false;
  while (true) {
    if (c == EOF) {
      if (quoted) throw ParseError(record, "unterminated quoted field");
      break;
    }
    any = true;
    const char ch = static_cast<char>(c);
    if (quoted) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get();
          field.push_back('"');
        } else {
          quoted = false;
          after_quote = true;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"') {
      if (!field.empty() || after_quote) {
        throw ParseError(record, "quote inside unquoted field");
      }
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
      after_quote = false;
    } else if (ch == '\n' || ch == '\r') {
      if (ch == '\r' && in.peek() == '\n') in.get();
      break;
    } else {
      if (after_quote) throw ParseError(record, "text after closing quote");
      field.push_back(ch);
    }
    c = in.get();
  }
  fields.push_back(std::move(field));
  return any;
}

std::vector<RawTicket> ingest_csv(std::istream& in) {
  std::vector<std::string> header;
  if (!read_csv_record(in, header, 0)) {
    throw SchemaError("group", "csv input has no header row");
  }
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) {
    header[0].erase(0, 3);
  }
  const auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (trim(header[i]) == name) return i;
    }
    return std::nullopt;
  };
  const auto required = [&](const std::string& name) {
    auto c = column(name);
    if (!c) throw SchemaError(name, "csv header lacks required column '" + name + "'");
    return *c;
  };
  const std::size_t group_col = required("group");
  const std::size_t resolver_col = required("resolver");
  const std::size_t desc_col = required("description");
  const auto id_col = column("id");
  const auto resolved_col = column("resolved_at");

  std::vector<RawTicket> out;
  std::vector<std::string> fields;
  std::size_t record = 0;
  while (read_csv_record(in, fields, record)) {
    if (fields.size() == 1 && fields[0].empty()) {
      continue;  // blank line
    }
    if (fields.size() != header.size()) {
      throw ParseError(record, "expected " + std::to_string(header.size()) +
                                   " fields, found " +
                                   std::to_string(fields.size()));
    }
    for (const auto& f : fields) {
      if (!is_valid_utf8(f)) throw ParseError(record, "invalid UTF-8");
    }
    RawTicket t;
    t.id = id_col && !fields[*id_col].empty() ? fields[*id_col]
                                              : std::to_string(record);
    t.group = fields[group_col];
    t.resolver = fields[resolver_col];
    t.description = fields[desc_col];
    if (resolved_col && !fields[*resolved_col].empty()) {
      t.resolved_at = fields[*resolved_col];
    }
    out.push_back(std::move(t));
    ++record;
  }
  return out;
}

std::string string_field(const json& obj, const char* key, std::size_t record,
                         bool required) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    if (required) {
      throw SchemaError(key, "record " + std::to_string(record) +
                                 " lacks required key '" + key + "'");
    }
    return {};
  }
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  throw ParseError(record, std::string("key '") + key + "' is not a string");
}

std::vector<RawTicket> ingest_jsonl(std::istream& in) {
  std::vector<RawTicket> out;
  std::string line;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (!is_valid_utf8(line)) throw ParseError(record, "invalid UTF-8");
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(record, e.what());
    }
    if (!obj.is_object()) throw ParseError(record, "not a JSON object");
    RawTicket t;
    t.group = string_field(obj, "group", record, true);
    t.resolver = string_field(obj, "resolver", record, true);
    t.description = string_field(obj, "description", record, true);
    t.id = string_field(obj, "id", record, false);
    if (t.id.empty()) t.id = std::to_string(record);
    auto resolved = string_field(obj, "resolved_at", record, false);
    if (!resolved.empty()) t.resolved_at = std::move(resolved);
    out.push_back(std::move(t));
    ++record;
  }
  return out;
}

}  // namespace

InputFormat parse_input_format(const std::string& name) {
  if (name == "csv") return InputFormat::csv;
  if (name == "jsonl") return InputFormat::jsonl;
  throw InvalidArgument("unknown input format '" + name +
                        "' (expected csv or jsonl)");
}

std::vector<RawTicket> ingest(std::istream& in, InputFormat format) {
  auto out = format == InputFormat::csv ? ingest_csv(in) : ingest_jsonl(in);
  std::unordered_set<std::string_view> seen;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!seen.insert(out[i].id).second) throw ParseError(i, "duplicate id '" + out[i].id + "'");
  }
  return out;
}

CleanResult clean(std::span<const RawTicket> tickets, int min_tokens) {
  if (min_tokens < 1) throw InvalidArgument("min_tokens must be >= 1");
  CleanResult result;
  result.report.input = tickets.size();
  for (const auto& raw : tickets) {
    CleanTicket t;
    t.group = trim(raw.group);
    t.resolver = trim(raw.resolver);
    if (t.group.empty()) {
      ++result.report.empty_group;
      continue;
    }
    if (t.resolver.empty()) {
      ++result.report.empty_resolver;
      continue;
    }
    t.tokens = tokenize(raw.description);
    if (t.tokens.size() < static_cast<std::size_t>(min_tokens)) {
      ++result.report.nonsense_description;
      continue;
    }
    t.id = raw.id;
    t.description = raw.description;
    t.resolved_at = raw.resolved_at;
    result.tickets.push_back(std::move(t));
  }
  result.report.kept = result.tickets.size();
  return result;
}

DatasetSplit split(std::span<const CleanTicket> tickets, SplitRatios ratios,
                   std::uint64_t seed, SplitOrder order) {
  if (ratios.train == 0 || ratios.validation == 0 || ratios.test == 0) {
    throw InvalidArgument("split ratios must be positive");
  }
  if (tickets.size() < 10) {
    throw InvalidArgument("split needs at least 10 tickets, got " +
                          std::to_string(tickets.size()));
  }
  std::vector<std::size_t> order_idx(tickets.size());
  std::iota(order_idx.begin(), order_idx.end(), 0);
  if (order == SplitOrder::random) {
    std::mt19937_64 rng(seed);
    std::shuffle(order_idx.begin(), order_idx.end(), rng);
  } else {
    std::stable_sort(order_idx.begin(), order_idx.end(),
                     [&](std::size_t a, std::size_t b) {
                       return tickets[a].resolved_at.value_or("") <
                              tickets[b].resolved_at.value_or("");
                     });
  }
  const std::size_t n = tickets.size();
  const std::size_t total = ratios.train + ratios.validation + ratios.test;
  const std::size_t n_val = n * ratios.validation / total;
  const std::size_t n_test = n * ratios.test / total;
  const std::size_t n_train = n - n_val - n_test;

  DatasetSplit out;
  out.seed = seed;
  out.train.reserve(n_train);
  out.validation.reserve(n_val);
  out.test.reserve(n_test);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = tickets[order_idx[i]];
    if (i < n_train) {
      out.train.push_back(t);
    } else if (i < n_train + n_val) {
      out.validation.push_back(t);
    } else {
      out.test.push_back(t);
    }
  }
  return out;
}

void write_jsonl(std::ostream& out, std::span<const CleanTicket> tickets) {
  for (const auto& t : tickets) {
    json obj = {{"id", t.id},
                {"group", t.group},
                {"resolver", t.resolver},
                {"description", t.description}};
    if (t.resolved_at) obj["resolved_at"] = *t.resolved_at;
    out << obj.dump() << '\n';
  }
}

std::uint64_t corpus_fingerprint(std::span<const CleanTicket> tickets) {
  std::uint64_t h = fnv1a64("corpus");
  for (const auto& t : tickets) {
    for (const std::string* s : {&t.id, &t.group, &t.resolver, &t.description}) {
      h = fnv1a64(*s, h);
      h = fnv1a64(std::string_view("\x1f", 1), h);
    }
  }
  return h;
}

}  // namespace triage
