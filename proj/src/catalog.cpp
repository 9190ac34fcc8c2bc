#include "lesionkit/catalog.hpp"

#include "lesionkit/errors.hpp"
#include "lesionkit/image.hpp"
#include "lesionkit/parallel.hpp"

#include <openssl/evp.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <set>

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace lesionkit {

int Manifest::class_index(const std::string& label) const {
  const auto it = std::find(classes.begin(), classes.end(), label);
  return it == classes.end() ? -1 : static_cast<int>(it - classes.begin());
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr))
    throw std::runtime_error("sha256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string hash_to_hex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

std::uint64_t hash_from_hex(const std::string& hex) {
  if (hex.size() != 16 ||
      hex.find_first_not_of("0123456789abcdef") != std::string::npos)
    throw DataError("malformed hash '" + hex + "'");
  return std::stoull(hex, nullptr, 16);
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<ClassDir> default_class_map(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("corpus root not found: " + root.string());
  std::vector<ClassDir> out;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) {
      const auto name = entry.path().filename().string();
      out.push_back({name, name, name});
    }
  }
  std::sort(out.begin(), out.end(),
            [](const ClassDir& a, const ClassDir& b) { return a.dir < b.dir; });
  return out;
}

namespace {

struct Candidate {
  std::string rel;  // relative path, generic form
  fs::path abs;
  std::size_t map_index;
  std::string source;
};

struct Decoded {
  bool ok = false;
  std::string id;
  int width = 0;
  int height = 0;
  std::string error;
};

}  // namespace

ScanResult scan_dataset(const fs::path& root, std::span<const ClassDir> class_map,
                        unsigned threads) {
  if (!fs::is_directory(root)) throw DataError("corpus root not found: " + root.string());
  if (class_map.empty()) throw ConfigError("class map is empty");

  ScanResult result;
  Manifest& m = result.manifest;
  for (const auto& cd : class_map) {
    if (cd.label.empty()) throw ConfigError("class map entry '" + cd.dir + "' has no label");
    if (m.class_index(cd.label) < 0) m.classes.push_back(cd.label);
  }

  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < class_map.size(); ++i) {
    const fs::path dir = root / class_map[i].dir;
    if (!fs::is_directory(dir)) continue;
    const std::string default_source =
        class_map[i].source.empty() ? class_map[i].dir : class_map[i].source;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      const fs::path below = fs::relative(entry.path(), dir);
      std::string source = default_source;
      if (std::distance(below.begin(), below.end()) > 1) source = below.begin()->string();
      candidates.push_back({fs::relative(entry.path(), root).generic_string(), entry.path(), i,
                            std::move(source)});
    }
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) { return a.rel < b.rel; });
  candidates.erase(std::unique(candidates.begin(), candidates.end(),
                               [](const Candidate& a, const Candidate& b) { return a.rel == b.rel; }),
                   candidates.end());

  std::vector<Decoded> decoded(candidates.size());
  parallel_for(candidates.size(), threads, [&](std::size_t i) {
    Decoded& d = decoded[i];
    try {
      const auto bytes = read_file_bytes(candidates[i].abs);
      const Image8 img = decode_image(bytes);
      d.id = sha256_hex(bytes);
      d.width = static_cast<int>(img.width());
      d.height = static_cast<int>(img.height());
      d.ok = true;
    } catch (const std::exception& e) {
      d.error = e.what();
    }
  });

  std::vector<std::size_t> per_class(m.classes.size(), 0);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Decoded& d = decoded[i];
    if (!d.ok) {
      result.issues.push_back({candidates[i].rel, "undecodable: " + d.error});
      continue;
    }
    const auto& cd = class_map[candidates[i].map_index];
    ImageRecord rec{d.id, candidates[i].rel, cd.label, candidates[i].source, d.width, d.height,
                    std::nullopt};
    if (rec.width < kMinWidth || rec.height < kMinHeight) {
      result.issues.push_back({rec.path, "undersized " + std::to_string(rec.width) + "x" +
                                             std::to_string(rec.height)});
    }
    ++per_class[static_cast<std::size_t>(m.class_index(rec.label))];
    m.records.push_back(std::move(rec));
  }
  for (std::size_t c = 0; c < m.classes.size(); ++c) {
    if (per_class[c] == 0) throw DataError("empty class: " + m.classes[c]);
  }

  m.corpus_root = fs::absolute(root).lexically_normal().generic_string();
  m.created = utc_timestamp();
  return result;
}

std::vector<Violation> validate_manifest(const Manifest& m) {
  std::vector<Violation> out;
  if (m.classes.empty()) out.push_back({"empty classes", "class list is empty"});
  std::set<std::string> seen_classes;
  for (const auto& c : m.classes) {
    if (!seen_classes.insert(c).second) out.push_back({"duplicate class", c});
  }
  std::set<std::string> seen_ids;
  for (const auto& r : m.records) {
    if (!seen_ids.insert(r.id).second) out.push_back({"duplicate id", r.id + " (" + r.path + ")"});
    if (!seen_classes.count(r.label))
      out.push_back({"unknown label", r.label + " (" + r.path + ")"});
    if (r.width < kMinWidth || r.height < kMinHeight) {
      out.push_back({"sub-minimum dimensions", r.path + " is " + std::to_string(r.width) + "x" +
                                                   std::to_string(r.height)});
    }
  }
  return out;
}

void write_manifest(std::ostream& out, const Manifest& m) {
  ordered_json header;
  header["classes"] = m.classes;
  header["created"] = m.created;
  header["corpus_root"] = m.corpus_root;
  out << header.dump() << '\n';
  for (const auto& r : m.records) {
    ordered_json j;
    j["id"] = r.id;
    j["path"] = r.path;
    j["label"] = r.label;
    j["source"] = r.source;
    j["width"] = r.width;
    j["height"] = r.height;
    j["hash"] = r.hash ? ordered_json(hash_to_hex(*r.hash)) : ordered_json(nullptr);
    out << j.dump() << '\n';
  }
}

Manifest read_manifest(std::istream& in) {
  Manifest m;
  std::string line;
  if (!std::getline(in, line)) throw DataError("manifest is empty");
  try {
    const auto header = nlohmann::json::parse(line);
    m.classes = header.at("classes").get<std::vector<std::string>>();
    m.created = header.at("created").get<std::string>();
    m.corpus_root = header.at("corpus_root").get<std::string>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      ImageRecord r;
      r.id = j.at("id").get<std::string>();
      r.path = j.at("path").get<std::string>();
      r.label = j.at("label").get<std::string>();
      r.source = j.at("source").get<std::string>();
      r.width = j.at("width").get<int>();
      r.height = j.at("height").get<int>();
      if (j.contains("hash") && !j["hash"].is_null())
        r.hash = hash_from_hex(j["hash"].get<std::string>());
      m.records.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void save_manifest(const fs::path& path, const Manifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_manifest(out, m);
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest " + path.string());
  return read_manifest(in);
}

}  // namespace lesionkit
