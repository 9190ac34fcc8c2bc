#include "lesionkit/partition.hpp"

#include "lesionkit/errors.hpp"
#include "lesionkit/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>

namespace lesionkit {

using ordered_json = nlohmann::ordered_json;

std::string to_string(Subset s) { return s == Subset::test ? "test" : "trainval"; }

Subset subset_from_string(const std::string& s) {
  if (s == "test") return Subset::test;
  if (s == "trainval") return Subset::trainval;
  throw DataError("unknown subset '" + s + "'");
}

std::size_t holdout_count(std::size_t n, double test_fraction) {
  if (n < 2) throw DataError("class too small to stratify");
  // The epsilon absorbs representation error, e.g. 15 * 0.1 = 1.5000000000000002.
  const double raw = std::floor(static_cast<double>(n) * test_fraction + 0.5 + 1e-9);
  const auto rounded = static_cast<std::size_t>(std::max(raw, 0.0));
  return std::clamp<std::size_t>(rounded, 1, n - 1);
}

namespace {

std::vector<std::vector<std::string>> ids_by_class(const Manifest& m) {
  std::vector<std::vector<std::string>> out(m.classes.size());
  for (const auto& r : m.records) {
    const int c = m.class_index(r.label);
    if (c < 0) throw DataError("record " + r.id + " has unknown label " + r.label);
    out[static_cast<std::size_t>(c)].push_back(r.id);
  }
  for (auto& ids : out) {
    std::sort(ids.begin(), ids.end());
    if (const auto dup = std::adjacent_find(ids.begin(), ids.end()); dup != ids.end())
      throw DataError("duplicate id " + *dup + " in manifest; deduplicate first");
  }
  return out;
}

void shuffle_ids(std::vector<std::string>& ids, std::uint64_t seed, const std::string& stage,
                 const std::string& label) {
  Random rng(derive_seed(derive_seed(seed, stage), label));
  rng.shuffle(std::span<std::string>(ids));
}

}  // namespace

SplitPlan stratified_holdout(const Manifest& m, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("test_fraction must lie in (0, 1)");
  SplitPlan plan{test_fraction, seed, {}};
  auto by_class = ids_by_class(m);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& ids = by_class[c];
    if (ids.size() < 2) throw DataError("class too small to stratify: " + m.classes[c]);
    shuffle_ids(ids, seed, "holdout", m.classes[c]);
    const std::size_t n_test = holdout_count(ids.size(), test_fraction);
    for (std::size_t i = 0; i < ids.size(); ++i)
      plan.assignment[ids[i]] = i < n_test ? Subset::test : Subset::trainval;
  }
  return plan;
}

Manifest restrict_to(const Manifest& m, const SplitPlan& split, Subset subset) {
  Manifest out;
  out.classes = m.classes;
  out.created = m.created;
  out.corpus_root = m.corpus_root;
  for (const auto& r : m.records) {
    const auto it = split.assignment.find(r.id);
    if (it == split.assignment.end()) throw DataError("record " + r.id + " missing from split");
    if (it->second == subset) out.records.push_back(r);
  }
  return out;
}

FoldPlan stratified_kfold(const Manifest& trainval, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("k must be >= 2");
  FoldPlan plan{k, seed, {}};
  auto by_class = ids_by_class(trainval);
  std::size_t offset = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& ids = by_class[c];
    if (ids.size() < static_cast<std::size_t>(k))
      throw DataError("class " + trainval.classes[c] + " has " + std::to_string(ids.size()) +
                      " items, fewer than k = " + std::to_string(k));
    shuffle_ids(ids, seed, "kfold", trainval.classes[c]);
    for (std::size_t i = 0; i < ids.size(); ++i)
      plan.fold_of[ids[i]] = static_cast<int>((offset + i) % static_cast<std::size_t>(k));
    offset += ids.size();
  }
  return plan;
}

std::vector<Violation> verify_partition(const Manifest& m, const SplitPlan& split,
                                        const FoldPlan& folds) {
  std::vector<Violation> out;
  std::set<std::string> ids;
  std::map<std::string, std::string> label_of;
  for (const auto& r : m.records) {
    ids.insert(r.id);
    label_of[r.id] = r.label;
  }

  for (const auto& id : ids) {
    if (!split.assignment.count(id)) out.push_back({"unassigned", id + " missing from split"});
  }
  for (const auto& [id, subset] : split.assignment) {
    if (!ids.count(id)) out.push_back({"unknown id", id + " in split but not in manifest"});
  }

  // Holdout counts per class must follow the rounding rule.
  std::map<std::string, std::pair<std::size_t, std::size_t>> class_counts;  // total, test
  for (const auto& r : m.records) {
    auto& cc = class_counts[r.label];
    ++cc.first;
    const auto it = split.assignment.find(r.id);
    if (it != split.assignment.end() && it->second == Subset::test) ++cc.second;
  }
  for (const auto& [label, cc] : class_counts) {
    if (cc.first < 2) continue;
    const std::size_t want = holdout_count(cc.first, split.test_fraction);
    if (cc.second != want) {
      out.push_back({"holdout count", label + " has " + std::to_string(cc.second) +
                                          " test items, expected " + std::to_string(want)});
    }
  }

  std::map<std::string, std::vector<std::size_t>> per_class_fold;
  for (const auto& [id, fold] : folds.fold_of) {
    if (!ids.count(id)) {
      out.push_back({"unknown id", id + " in folds but not in manifest"});
      continue;
    }
    if (fold < 0 || fold >= folds.k) {
      out.push_back({"fold range", id + " has fold " + std::to_string(fold)});
      continue;
    }
    const auto it = split.assignment.find(id);
    if (it != split.assignment.end() && it->second == Subset::test)
      out.push_back({"leakage", id + " is in the test set and in fold " + std::to_string(fold)});
    auto& counts = per_class_fold[label_of[id]];
    counts.resize(static_cast<std::size_t>(folds.k), 0);
    ++counts[static_cast<std::size_t>(fold)];
  }
  for (const auto& [id, subset] : split.assignment) {
    if (subset == Subset::trainval && ids.count(id) && !folds.fold_of.count(id))
      out.push_back({"fold coverage", id + " is trainval but in no fold"});
  }
  for (const auto& [label, counts] : per_class_fold) {
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    if (*hi - *lo > 1) {
      out.push_back({"stratification", label + " fold sizes range from " + std::to_string(*lo) +
                                           " to " + std::to_string(*hi)});
    }
  }
  return out;
}

void write_split(std::ostream& out, const SplitPlan& plan) {
  ordered_json header;
  header["kind"] = "split";
  header["test_fraction"] = plan.test_fraction;
  header["seed"] = plan.seed;
  out << header.dump() << '\n';
  for (const auto& [id, subset] : plan.assignment) {
    ordered_json j;
    j["id"] = id;
    j["subset"] = to_string(subset);
    out << j.dump() << '\n';
  }
}

void write_folds(std::ostream& out, const FoldPlan& plan) {
  ordered_json header;
  header["kind"] = "folds";
  header["k"] = plan.k;
  header["seed"] = plan.seed;
  out << header.dump() << '\n';
  for (const auto& [id, fold] : plan.fold_of) {
    ordered_json j;
    j["id"] = id;
    j["fold"] = fold;
    out << j.dump() << '\n';
  }
}

namespace {

nlohmann::json read_header(std::istream& in, const std::string& kind) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(kind + " plan is empty");
  auto header = nlohmann::json::parse(line);
  if (header.value("kind", "") != kind) throw DataError("not a " + kind + " plan");
  return header;
}

}  // namespace

SplitPlan read_split(std::istream& in) {
  try {
    const auto header = read_header(in, "split");
    SplitPlan plan;
    plan.test_fraction = header.at("test_fraction").get<double>();
    plan.seed = header.at("seed").get<std::uint64_t>();
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      plan.assignment[j.at("id").get<std::string>()] =
          subset_from_string(j.at("subset").get<std::string>());
    }
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed split plan: ") + e.what());
  }
}

FoldPlan read_folds(std::istream& in) {
  try {
    const auto header = read_header(in, "folds");
    FoldPlan plan;
    plan.k = header.at("k").get<int>();
    plan.seed = header.at("seed").get<std::uint64_t>();
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      plan.fold_of[j.at("id").get<std::string>()] = j.at("fold").get<int>();
    }
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed fold plan: ") + e.what());
  }
}

void save_split(const std::filesystem::path& path, const SplitPlan& plan) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_split(out, plan);
}

SplitPlan load_split(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open split plan " + path.string());
  return read_split(in);
}

void save_folds(const std::filesystem::path& path, const FoldPlan& plan) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_folds(out, plan);
}

FoldPlan load_folds(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open fold plan " + path.string());
  return read_folds(in);
}

void print_partition_table(std::ostream& out, const Manifest& m, const SplitPlan& split,
                           const FoldPlan& folds) {
  const auto k = static_cast<std::size_t>(folds.k);
  std::size_t width = 5;
  for (const auto& c : m.classes) width = std::max(width, c.size());
  out << std::left << std::setw(static_cast<int>(width)) << "class" << std::right
      << std::setw(8) << "total" << std::setw(10) << "trainval" << std::setw(7) << "test";
  for (std::size_t f = 0; f < k; ++f) out << std::setw(7) << ("fold" + std::to_string(f));
  out << '\n';
  std::vector<std::size_t> grand(3 + k, 0);
  auto row = [&](const std::string& name, const std::vector<std::size_t>& v) {
    out << std::left << std::setw(static_cast<int>(width)) << name << std::right << std::setw(8)
        << v[0] << std::setw(10) << v[1] << std::setw(7) << v[2];
    for (std::size_t f = 0; f < k; ++f) out << std::setw(7) << v[3 + f];
    out << '\n';
  };
  for (const auto& cls : m.classes) {
    std::vector<std::size_t> v(3 + k, 0);
    for (const auto& r : m.records) {
      if (r.label != cls) continue;
      ++v[0];
      const auto s = split.assignment.find(r.id);
      if (s != split.assignment.end()) ++v[s->second == Subset::test ? 2 : 1];
      const auto f = folds.fold_of.find(r.id);
      if (f != folds.fold_of.end() && f->second >= 0 && static_cast<std::size_t>(f->second) < k)
        ++v[3 + static_cast<std::size_t>(f->second)];
    }
    for (std::size_t i = 0; i < v.size(); ++i) grand[i] += v[i];
    row(cls, v);
  }
  row("all", grand);
}

}  // namespace lesionkit
