#pragma once

#include "lesionkit/catalog.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace lesionkit {

enum class Subset { trainval, test };

std::string to_string(Subset s);
Subset subset_from_string(const std::string& s);

struct SplitPlan {
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  std::map<std::string, Subset> assignment;  // id -> subset

  bool operator==(const SplitPlan&) const = default;
};

struct FoldPlan {
  int k = 5;
  std::uint64_t seed = 0;
  std::map<std::string, int> fold_of;  // id -> fold in [0, k)

  bool operator==(const FoldPlan&) const = default;
};

/// Test-set size for a class of n items: round-half-up(n * fraction),
/// clamped to [1, n - 1].
std::size_t holdout_count(std::size_t n, double test_fraction);

/// Per class: sort ids, shuffle with a stream derived from (seed, class),
/// send the first holdout_count ids to test.
SplitPlan stratified_holdout(const Manifest& m, double test_fraction, std::uint64_t seed);

/// Records of m whose split assignment equals `subset`, in manifest order.
Manifest restrict_to(const Manifest& m, const SplitPlan& split, Subset subset);

/// Per class: sort, seeded shuffle, then deal round-robin into k folds. Each
/// class starts dealing where the previous class stopped, which keeps total
/// fold sizes within one of each other as well.
FoldPlan stratified_kfold(const Manifest& trainval, int k, std::uint64_t seed);

std::vector<Violation> verify_partition(const Manifest& m, const SplitPlan& split,
                                        const FoldPlan& folds);

void write_split(std::ostream& out, const SplitPlan& plan);
SplitPlan read_split(std::istream& in);
void write_folds(std::ostream& out, const FoldPlan& plan);
FoldPlan read_folds(std::istream& in);
void save_split(const std::filesystem::path& path, const SplitPlan& plan);
SplitPlan load_split(const std::filesystem::path& path);
void save_folds(const std::filesystem::path& path, const FoldPlan& plan);
FoldPlan load_folds(const std::filesystem::path& path);

/// Per-class table: class, total, trainval, test, then one column per fold.
void print_partition_table(std::ostream& out, const Manifest& m, const SplitPlan& split,
                           const FoldPlan& folds);

}  // namespace lesionkit
