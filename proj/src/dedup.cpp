#include "lesionkit/dedup.hpp"

#include "lesionkit/errors.hpp"
#include "lesionkit/parallel.hpp"

#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace lesionkit {

PerceptualHash compute_dhash_file(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const DataError& e) {
    throw BadImageError(e.what());
  }
  return compute_dhash(decode_image(bytes));
}

void hash_manifest(Manifest& m, unsigned threads) {
  const std::filesystem::path root = m.corpus_root;
  parallel_for(m.records.size(), threads, [&](std::size_t i) {
    m.records[i].hash = compute_dhash_file(root / m.records[i].path).bits;
  });
}

DedupResult deduplicate(const Manifest& m, int threshold) {
  if (threshold < 0) throw std::invalid_argument("dedup threshold must be >= 0");
  DedupResult out;
  out.kept.classes = m.classes;
  out.kept.created = m.created;
  out.kept.corpus_root = m.corpus_root;

  // Exact matching goes through the map; near matches scan kept records in order.
  std::unordered_map<std::uint64_t, std::size_t> exact;
  for (const auto& r : m.records) {
    if (!r.hash) throw DataError("record " + r.id + " has no perceptual hash");
    const PerceptualHash h{*r.hash};
    const ImageRecord* match = nullptr;
    if (threshold == 0) {
      if (auto it = exact.find(h.bits); it != exact.end()) match = &out.kept.records[it->second];
    } else {
      for (const auto& k : out.kept.records) {
        if (hamming_distance(h, PerceptualHash{*k.hash}) <= threshold) {
          match = &k;
          break;
        }
      }
    }
    if (match) {
      out.removed.push_back({r.id, match->id});
    } else {
      exact.emplace(h.bits, out.kept.records.size());
      out.kept.records.push_back(r);
    }
  }
  return out;
}

void write_removed_report(std::ostream& out, const std::vector<RemovedPair>& removed) {
  out << "duplicate_id\tretained_id\n";
  for (const auto& p : removed) out << p.duplicate_id << '\t' << p.retained_id << '\n';
}

std::vector<RemovedPair> read_removed_report(std::istream& in) {
  std::vector<RemovedPair> out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    RemovedPair p;
    if (!(row >> p.duplicate_id >> p.retained_id)) throw DataError("malformed removed report");
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace lesionkit
