#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lesionkit {

/// Five-class label set used by the bundled corpora.
std::vector<std::string> lesion_classes();

enum class SyntheticStyle {
  textured,  // class-specific colour and stripe texture plus noise
  noise,     // i.i.d. gray noise; every image gets an unrelated dHash
};

struct SyntheticCorpusSpec {
  std::vector<std::string> classes = lesion_classes();
  std::vector<int> per_class;  // distinct images per class
  int duplicates = 0;          // byte copies spread over the classes
  int width = 32;
  int height = 32;
  std::uint64_t seed = 7;
  SyntheticStyle style = SyntheticStyle::textured;
};

struct SyntheticCorpus {
  std::filesystem::path root;
  int distinct = 0;
  int duplicates = 0;
};

/// Writes root/<class>/img_NNNNN.png (and img_NNNNN_dup.png copies).
/// Deterministic in the spec.
SyntheticCorpus generate_synthetic_corpus(const std::filesystem::path& root,
                                          const SyntheticCorpusSpec& spec);

}  // namespace lesionkit
