#include <cstdio>
#include <filesystem>
#include <map>

#include <unistd.h>

#include "triage/binary_io.hpp"
#include "triage/errors.hpp"
#include "triage/pipeline.hpp"

namespace fs = std::filesystem;

namespace triage {

using nlohmann::json;

const std::vector<std::pair<std::string_view, std::string_view>> kBundleMembers{
    {"encoder", "encoder.bin"},         {"group_head", "group_head.bin"},
    {"resolver_head", "resolver_head.bin"}, {"list_head", "list_head.bin"},
    {"topics", "topics.bin"},           {"lists", "lists.bin"},
    {"ann_index", "ann_index.bin"},     {"similar_meta", "similar_meta.bin"},
    {"group_prior", "group_prior.bin"}, {"scorer", "scorer.bin"},
    {"ensemble", "ensemble.bin"},
};

namespace {

constexpr std::uint32_t kBundleFormat = 1;
constexpr std::string_view kSimilarMagic = "TDASIM1";
constexpr const char* kManifest = "manifest.json";

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
  std::size_t used = 0;
  const auto v = std::stoull(s, &used, 16);
  if (used != s.size()) throw FormatError("bundle manifest: bad hex value '" + s + "'");
  return v;
}

std::string serialize_snippets(std::span<const std::string> snippets) {
  io::BinaryWriter w;
  w.magic(kSimilarMagic);
  w.u32(1);
  w.strs(snippets);
  return std::move(w).take();
}

std::vector<std::string> deserialize_snippets(std::string_view bytes) {
  io::BinaryReader r(bytes, "similar-ticket metadata");
  r.expect_magic(kSimilarMagic);
  r.expect_version(1);
  auto out = r.strs();
  r.expect_end();
  return out;
}

std::map<std::string, std::string, std::less<>> member_bytes(const ModelBundle& b) {
  std::map<std::string, std::string, std::less<>> m;
  m["encoder"] = serialize(b.encoder);
  m["group_head"] = serialize(b.group_head);
  m["resolver_head"] = serialize(b.resolver_head);
  if (b.list_head) m["list_head"] = serialize(*b.list_head);
  m["topics"] = serialize(b.topics);
  m["lists"] = serialize(std::span<const ResolverList>(b.lists));
  m["ann_index"] = b.ann.serialize();
  m["similar_meta"] = serialize_snippets(b.snippets);
  m["group_prior"] = serialize(b.prior);
  m["scorer"] = serialize(b.scorer);
  m["ensemble"] = serialize(b.weights);
  return m;
}

void check_consistency(const ModelBundle& b) {
  auto fail = [](const std::string& why) { throw FormatError("bundle is inconsistent: " + why); };
  const std::size_t d = b.encoder.dimension;
  if (b.group_head.dimension() != d || b.resolver_head.dimension() != d || b.ann.dimension() != d ||
      (b.list_head && b.list_head->dimension() != d)) {
    fail("member dimensions differ from the encoder's");
  }
  if (!(b.prior.groups == b.groups()) || !(b.prior.resolvers == b.resolvers())) {
    fail("group prior vocabularies differ from the heads'");
  }
  if (b.snippets.size() != b.ann.size()) fail("snippet count differs from the index size");
  if (b.list_head) {
    for (const auto& id : b.list_head->vocabulary().labels()) {
      if (std::none_of(b.lists.begin(), b.lists.end(), [&](const ResolverList& l) { return l.list_id == id; })) {
        fail("list head label '" + id + "' has no resolver list");
      }
    }
    for (const auto& l : b.lists) {
      for (const auto& f : l.member_resolvers) {
        if (!b.resolvers().find(f.resolver)) fail("list resolver '" + f.resolver + "' is not in the vocabulary");
      }
    }
  }
}

}  // namespace

void save_bundle(const ModelBundle& b, const fs::path& dir) {
  const auto members = member_bytes(b);
  json manifest{
      {"format_version", kBundleFormat},
      {"created_at", b.manifest.created_at},
      {"seeds", {{"master", b.manifest.seed}, {"split", b.manifest.split_seed}}},
      {"config", b.config.to_json()},
      {"config_hash", hex64(b.config.hash())},
      {"corpus_fingerprint",
       b.manifest.corpus_fingerprint ? json(hex64(*b.manifest.corpus_fingerprint)) : json(nullptr)},
      {"absent_members", b.manifest.absent_members},
  };
  json stages = json::array();
  for (const auto& s : b.manifest.stages) stages.push_back({{"stage", s.stage}, {"seconds", s.seconds}});
  manifest["stages"] = stages;
  json listed = json::object();
  for (const auto& [name, file] : kBundleMembers) {
    const auto it = members.find(name);
    if (it == members.end()) continue;
    listed[std::string(name)] = {{"file", file}, {"bytes", it->second.size()}, {"crc32", io::crc32(it->second)}};
  }
  manifest["members"] = listed;

  fs::path target = fs::absolute(dir);
  if (target.filename().empty()) target = target.parent_path();
  fs::path tmp = target;
  tmp += ".tmp-" + std::to_string(::getpid());
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  for (const auto& [name, file] : kBundleMembers) {
    const auto it = members.find(name);
    if (it != members.end()) io::write_file(tmp / file, it->second);
  }
  io::write_file(tmp / kManifest, manifest.dump(2) + "\n");
  fs::remove_all(target);
  fs::rename(tmp, target);
}

ModelBundle load_bundle(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw MissingMemberError("bundle directory " + dir.string());
  const fs::path mpath = dir / kManifest;
  if (!fs::exists(mpath)) throw MissingMemberError(kManifest);
  json manifest;
  try {
    manifest = json::parse(io::read_file(mpath));
  } catch (const json::exception& e) {
    throw FormatError(std::string("bundle manifest is not valid JSON: ") + e.what());
  }
  ModelBundle b;
  try {
    const auto version = manifest.at("format_version").get<std::uint32_t>();
    if (version != kBundleFormat) throw VersionError("bundle manifest", version, kBundleFormat);
    b.manifest.format_version = version;
    b.manifest.created_at = manifest.at("created_at").get<std::string>();
    b.manifest.seed = manifest.at("seeds").at("master").get<std::uint64_t>();
    b.manifest.split_seed = manifest.at("seeds").at("split").get<std::uint64_t>();
    b.config = PipelineConfig::from_json(manifest.at("config"));
    b.manifest.config_hash = parse_hex64(manifest.at("config_hash").get<std::string>());
    if (!manifest.at("corpus_fingerprint").is_null()) {
      b.manifest.corpus_fingerprint = parse_hex64(manifest.at("corpus_fingerprint").get<std::string>());
    }
    for (const auto& s : manifest.at("stages")) {
      b.manifest.stages.push_back({s.at("stage").get<std::string>(), s.at("seconds").get<double>()});
    }
    b.manifest.absent_members = manifest.at("absent_members").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("bundle manifest is malformed: ") + e.what());
  }
  if (b.config.hash() != b.manifest.config_hash) {
    throw ConfigHashError("bundle config hash " + hex64(b.manifest.config_hash) +
                          " does not match its config (" + hex64(b.config.hash()) + ")");
  }

  const auto& listed = manifest.at("members");
  auto is_absent = [&](std::string_view name) {
    return std::find(b.manifest.absent_members.begin(), b.manifest.absent_members.end(), name) !=
           b.manifest.absent_members.end();
  };
  std::map<std::string, std::string, std::less<>> bytes;
  for (const auto& [name, file] : kBundleMembers) {
    const std::string key(name);
    if (is_absent(name)) {
      if (name != "list_head") throw FormatError("bundle member '" + key + "' cannot be absent");
      continue;
    }
    if (!listed.contains(key)) throw MissingMemberError(key);
    const fs::path path = dir / file;
    if (!fs::exists(path)) throw MissingMemberError(key);
    std::string data = io::read_file(path);
    std::uint32_t crc = 0;
    try {
      crc = listed.at(key).at("crc32").get<std::uint32_t>();
    } catch (const json::exception&) {
      throw FormatError("bundle manifest: member '" + key + "' has no checksum");
    }
    if (io::crc32(data) != crc) throw ChecksumError(key);
    bytes.emplace(key, std::move(data));
  }

  b.encoder = deserialize_encoder(bytes.at("encoder"));
  b.group_head = deserialize_head(bytes.at("group_head"));
  b.resolver_head = deserialize_head(bytes.at("resolver_head"));
  if (auto it = bytes.find("list_head"); it != bytes.end()) b.list_head = deserialize_head(it->second);
  b.topics = deserialize_topic_model(bytes.at("topics"));
  b.lists = deserialize_resolver_lists(bytes.at("lists"));
  b.ann = AnnIndex::deserialize(bytes.at("ann_index"));
  b.snippets = deserialize_snippets(bytes.at("similar_meta"));
  b.prior = deserialize_prior(bytes.at("group_prior"));
  b.scorer = deserialize_scorer(bytes.at("scorer"));
  b.weights = deserialize_weights(bytes.at("ensemble"));
  if (!b.list_head && b.weights.w[1] != 0.0) {
    throw FormatError("bundle is inconsistent: resolver-list weight is non-zero without a list head");
  }
  check_consistency(b);
  b.index_ids();
  return b;
}

}  // namespace triage
