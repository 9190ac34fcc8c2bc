#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lesionkit {

inline constexpr int kMinWidth = 9;
inline constexpr int kMinHeight = 8;

struct ImageRecord {
  std::string id;      // hex SHA-256 of the file bytes
  std::string path;    // relative to the corpus root, '/' separated
  std::string label;
  std::string source;
  int width = 0;
  int height = 0;
  std::optional<std::uint64_t> hash;  // dHash, filled in by the dedup stage

  bool operator==(const ImageRecord&) const = default;
};

struct Manifest {
  std::vector<std::string> classes;
  std::vector<ImageRecord> records;
  std::string created;
  std::string corpus_root;

  /// Index of `label` in classes, or -1.
  int class_index(const std::string& label) const;
};

/// Maps one directory under the corpus root onto a class label.
struct ClassDir {
  std::string dir;
  std::string label;
  std::string source;  // defaults to dir when empty
};

struct Violation {
  std::string kind;
  std::string detail;
};

struct ScanIssue {
  std::string path;
  std::string reason;  // "undecodable: ..." or "undersized WxH"
};

struct ScanResult {
  Manifest manifest;
  std::vector<ScanIssue> issues;
};

/// Catalogue every decodable image below the mapped directories.
/// Records come out sorted by relative path whatever the thread count.
ScanResult scan_dataset(const std::filesystem::path& root, std::span<const ClassDir> class_map,
                        unsigned threads = 0);

/// One ClassDir per immediate subdirectory of root, named after it, sorted.
std::vector<ClassDir> default_class_map(const std::filesystem::path& root);

std::vector<Violation> validate_manifest(const Manifest& m);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string hash_to_hex(std::uint64_t hash);
std::uint64_t hash_from_hex(const std::string& hex);
std::string utc_timestamp();

void write_manifest(std::ostream& out, const Manifest& m);
Manifest read_manifest(std::istream& in);
void save_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest load_manifest(const std::filesystem::path& path);

}  // namespace lesionkit
