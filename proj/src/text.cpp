#include "triage/text.hpp"

#include <ctime>
#include <cstdio>
#include <optional>

namespace triage {
namespace {

struct Decoded {
  char32_t code;
  std::size_t length;
};

std::optional<Decoded> decode_utf8(std::string_view s, std::size_t i) {
  const auto byte = [&](std::size_t k) {
    return static_cast<unsigned char>(s[k]);
  };
  const unsigned char b0 = byte(i);
  if (b0 < 0x80) return Decoded{b0, 1};
  std::size_t len = 0;
  char32_t code = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    code = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    code = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    code = b0 & 0x07;
  } else {
    return std::nullopt;
  }
  if (i + len > s.size()) return std::nullopt;
  for (std::size_t k = 1; k < len; ++k) {
    const unsigned char b = byte(i + k);
    if ((b & 0xC0) != 0x80) return std::nullopt;
    code = (code << 6) | (b & 0x3F);
  }
  static constexpr char32_t kMinForLength[] = {0, 0, 0x80, 0x800, 0x10000};
  if (code < kMinForLength[len] || code > 0x10FFFF ||
      (code >= 0xD800 && code <= 0xDFFF)) {
    return std::nullopt;
  }
  return Decoded{code, len};
}

bool is_boundary(char32_t c) {
  if (c < 0x80) {
    const bool alnum = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                       (c >= '0' && c <= '9');
    return !alnum;
  }
  // Latin-1 punctuation and symbols, NBSP.
  if (c >= 0x80 && c <= 0xBF) return true;
  if (c == 0xD7 || c == 0xF7) return true;
  // General punctuation and spaces, supplemental punctuation, CJK symbols.
  if (c >= 0x2000 && c <= 0x206F) return true;
  if (c >= 0x2E00 && c <= 0x2E7F) return true;
  if (c >= 0x3000 && c <= 0x303F) return true;
  if (c == 0x1680 || c == 0xFEFF || c == 0xFF0C || c == 0xFF0E) return true;
  return false;
}

}  // namespace

bool is_valid_utf8(std::string_view bytes) {
  std::size_t i = 0;
  while (i < bytes.size()) {
    const auto d = decode_utf8(bytes, i);
    if (!d) return false;
    i += d->length;
  }
  return true;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto d = decode_utf8(text, i);
    if (!d || is_boundary(d->code)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
      i += d ? d->length : 1;
      continue;
    }
    if (d->code < 0x80) {
      char c = static_cast<char>(d->code);
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      current.push_back(c);
    } else {
      current.append(text.substr(i, d->length));
    }
    i += d->length;
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::string snippet(std::string_view text, std::size_t max_chars) {
  std::size_t i = 0;
  std::size_t chars = 0;
  std::size_t last_space = std::string_view::npos;
  while (i < text.size() && chars < max_chars) {
    const auto d = decode_utf8(text, i);
    const std::size_t len = d ? d->length : 1;
    if (d && (d->code == ' ' || d->code == '\t' || d->code == '\n' ||
              d->code == '\r')) {
      last_space = i;
    }
    i += len;
    ++chars;
  }
  if (i >= text.size()) return std::string(text);
  // Cut mid-word only if the first word alone exceeds the limit.
  const bool next_is_space = text[i] == ' ' || text[i] == '\t' ||
                             text[i] == '\n' || text[i] == '\r';
  std::size_t cut = next_is_space || last_space == std::string_view::npos
                        ? i
                        : last_space;
  while (cut > 0 && (text[cut - 1] == ' ' || text[cut - 1] == '\t' ||
                     text[cut - 1] == '\n' || text[cut - 1] == '\r')) {
    --cut;
  }
  return std::string(text.substr(0, cut));
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string format_utc(std::chrono::system_clock::time_point t) {
  using namespace std::chrono;
  const auto ms = duration_cast<milliseconds>(t.time_since_epoch()).count();
  const std::time_t secs = static_cast<std::time_t>(ms / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                static_cast<int>(ms % 1000));
  return buf;
}

}  // namespace triage
