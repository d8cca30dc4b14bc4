// Copyright 2026 The metamf Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "metamf/errors.hpp"
#include "metamf/rng.hpp"

namespace metamf {

struct RatingRecord {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  double rating = 0.0;

  bool operator==(const RatingRecord&) const = default;
};

// How to read one rating file: delimiter, column positions, leading lines
// to skip, and an optional raw rating range to rescale onto [1, 5].
struct RatingFormat {
  std::string delimiter = "\t";
  std::size_t user_column = 0;
  std::size_t item_column = 1;
  std::size_t rating_column = 2;
  std::size_t skip_lines = 0;
  std::optional<std::pair<double, double>> source_range;

  // Presets: "tsv", "csv", "dat" (MovieLens "::"), "jester" (csv, raw
  // ratings in [-10, 10]). Otherwise a ';'-separated key=value list, e.g.
  // "delim=,;user=1;item=0;rating=2;skip=1;range=-10:10". The delimiter
  // names "tab", "comma", "space" are accepted.
  static RatingFormat parse(std::string_view spec);
};

// Densifies raw identifiers to [0, n) in order of first appearance.
class IndexMap {
 public:
  std::uint32_t intern(std::string_view raw) {
    auto it = index_.find(std::string(raw));
    if (it != index_.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(raw_.size());
    raw_.emplace_back(raw);
    index_.emplace(raw_.back(), id);
    return id;
  }
  std::optional<std::uint32_t> find(std::string_view raw) const {
    auto it = index_.find(std::string(raw));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  const std::string& raw(std::uint32_t id) const { return raw_.at(id); }
  std::size_t size() const noexcept { return raw_.size(); }

 private:
  std::vector<std::string> raw_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct LoadedRatings {
  std::vector<RatingRecord> records;
  IndexMap users;
  IndexMap items;

  std::size_t n_users() const { return users.size(); }
  std::size_t n_items() const { return items.size(); }
};

struct DatasetSplit {
  std::vector<RatingRecord> train;
  std::vector<RatingRecord> validation;
  std::vector<RatingRecord> test;
  // Positions of each part in the source record list.
  std::vector<std::size_t> train_index;
  std::vector<std::size_t> validation_index;
  std::vector<std::size_t> test_index;
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::uint64_t seed = 0;
};

enum class GroupLabel { Low, Med, High };

inline const char* to_string(GroupLabel g) {
  switch (g) {
    case GroupLabel::Low: return "Low";
    case GroupLabel::Med: return "Med";
    case GroupLabel::High: return "High";
  }
  return "?";
}

struct UserGroup {
  GroupLabel label = GroupLabel::Low;
  std::vector<std::uint32_t> user_ids;  // ascending

  bool contains(std::uint32_t u) const {
    return std::binary_search(user_ids.begin(), user_ids.end(), u);
  }
};

struct UserGroups {
  UserGroup low{GroupLabel::Low, {}};
  UserGroup med{GroupLabel::Med, {}};
  UserGroup high{GroupLabel::High, {}};

  // Label of `u`, if it belongs to any group.
  std::optional<GroupLabel> label_of(std::uint32_t u) const {
    if (low.contains(u)) return GroupLabel::Low;
    if (med.contains(u)) return GroupLabel::Med;
    if (high.contains(u)) return GroupLabel::High;
    return std::nullopt;
  }
};

struct PrivacyBudgetSample {
  double beta = 1.0;
  std::vector<RatingRecord> records;
  std::map<std::uint32_t, std::size_t> per_user_counts;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view line, std::string_view delim) {
  std::vector<std::string_view> out;
  if (delim == " ") {
    // Runs of blanks count as one separator.
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
      if (i >= line.size()) break;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
      out.push_back(line.substr(i, j - i));
      i = j;
    }
    return out;
  }
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + delim.size();
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::size_t parse_index(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ContractError("format: bad value for '" + std::string(key) + "': " + std::string(v));
  return out;
}

}  // namespace detail

inline RatingFormat RatingFormat::parse(std::string_view spec) {
  RatingFormat f;
  spec = detail::trim(spec);
  if (spec.empty() || spec == "tsv") return f;
  if (spec == "csv") {
    f.delimiter = ",";
    return f;
  }
  if (spec == "dat") {
    f.delimiter = "::";
    return f;
  }
  if (spec == "jester") {
    f.delimiter = ",";
    f.source_range = {-10.0, 10.0};
    return f;
  }
  for (std::string_view kv : detail::split(spec, ";")) {
    kv = detail::trim(kv);
    if (kv.empty()) continue;
    const auto eq = kv.find('=');
    if (eq == std::string_view::npos)
      throw ContractError("format: expected key=value, got '" + std::string(kv) + "'");
    const auto key = detail::trim(kv.substr(0, eq));
    const auto val = kv.substr(eq + 1);
    if (key == "delim") {
      if (val == "tab") f.delimiter = "\t";
      else if (val == "comma") f.delimiter = ",";
      else if (val == "space") f.delimiter = " ";
      else if (val.empty()) throw ContractError("format: empty delimiter");
      else f.delimiter = std::string(val);
    } else if (key == "user") {
      f.user_column = detail::parse_index(key, val);
    } else if (key == "item") {
      f.item_column = detail::parse_index(key, val);
    } else if (key == "rating") {
      f.rating_column = detail::parse_index(key, val);
    } else if (key == "skip") {
      f.skip_lines = detail::parse_index(key, val);
    } else if (key == "range") {
      const auto colon = val.find(':', 1);
      auto lo = colon == std::string_view::npos ? std::nullopt : detail::parse_double(val.substr(0, colon));
      auto hi = colon == std::string_view::npos ? std::nullopt : detail::parse_double(val.substr(colon + 1));
      if (!lo || !hi || !(*lo < *hi)) throw ContractError("format: bad range '" + std::string(val) + "'");
      f.source_range = {*lo, *hi};
    } else {
      throw ContractError("format: unknown key '" + std::string(key) + "'");
    }
  }
  return f;
}

// Maps raw ratings in [lo, hi] linearly onto [1, 5]; endpoints exact.
inline std::vector<RatingRecord> rescale_ratings(std::vector<RatingRecord> records, double lo,
                                                 double hi) {
  if (!(lo < hi)) throw ContractError("rescale_ratings: empty source range");
  for (std::size_t k = 0; k < records.size(); ++k) {
    RatingRecord& r = records[k];
    if (!(r.rating >= lo && r.rating <= hi)) {
      std::ostringstream os;
      os << "rescale_ratings: record " << k << " (user " << r.user << ", item " << r.item
         << ") has rating " << r.rating << " outside [" << lo << ", " << hi << "]";
      throw ContractError(os.str());
    }
    if (r.rating == lo) r.rating = 1.0;
    else if (r.rating == hi) r.rating = 5.0;
    else r.rating = 1.0 + 4.0 * (r.rating - lo) / (hi - lo);
  }
  return records;
}

// Parses a rating stream. Blank lines are ignored; any other line that does
// not yield (user, item, rating) is an IngestError carrying its 1-based line
// number. Duplicate (user, item) pairs are kept.
inline LoadedRatings load_ratings(std::istream& in, const RatingFormat& format) {
  LoadedRatings out;
  std::string line;
  std::size_t lineno = 0;
  const std::size_t need =
      std::max({format.user_column, format.item_column, format.rating_column}) + 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno <= format.skip_lines) continue;
    std::string_view view = line;
    if (lineno == 1 && view.starts_with("\xEF\xBB\xBF")) view.remove_prefix(3);
    if (detail::trim(view).empty()) continue;
    const auto fields = detail::split(view, format.delimiter);
    if (fields.size() < need)
      throw IngestError("expected at least " + std::to_string(need) + " fields, found " +
                            std::to_string(fields.size()),
                        lineno);
    const auto user = detail::trim(fields[format.user_column]);
    const auto item = detail::trim(fields[format.item_column]);
    if (user.empty() || item.empty()) throw IngestError("empty user or item id", lineno);
    const auto rating = detail::parse_double(fields[format.rating_column]);
    if (!rating)
      throw IngestError("unparseable rating '" + std::string(fields[format.rating_column]) + "'",
                        lineno);
    out.records.push_back({out.users.intern(user), out.items.intern(item), *rating});
  }
  if (out.records.empty()) throw ContractError("load_ratings: no rating records in input");
  if (format.source_range) {
    try {
      out.records = rescale_ratings(std::move(out.records), format.source_range->first,
                                    format.source_range->second);
    } catch (const ContractError& e) {
      throw IngestError(e.what(), 0);
    }
  }
  return out;
}

inline LoadedRatings load_ratings(const std::string& path, const RatingFormat& format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open rating file '" + path + "'");
  return load_ratings(in, format);
}

// Uniform permutation under `seed`, then contiguous cuts. Validation and
// test sizes are round(ratio * n); training takes the rest.
inline DatasetSplit split_dataset(const std::vector<RatingRecord>& records, std::size_t n_users,
                                  std::size_t n_items, std::uint64_t seed,
                                  std::array<double, 3> ratios = {0.8, 0.1, 0.1}) {
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
    throw ContractError("split_dataset: ratios must sum to 1");
  for (double r : ratios)
    if (r < 0.0) throw ContractError("split_dataset: negative ratio");
  if (records.size() < 10) throw ContractError("split_dataset: need at least 10 records");
  const std::size_t n = records.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(mix_seed(seed, 0x5b117));
  rng.shuffle(std::span<std::size_t>(perm));
  const auto n_val = static_cast<std::size_t>(std::llround(ratios[1] * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::llround(ratios[2] * static_cast<double>(n)));
  const std::size_t n_train = n - n_val - n_test;

  DatasetSplit s;
  s.n_users = n_users;
  s.n_items = n_items;
  s.seed = seed;
  s.train_index.assign(perm.begin(), perm.begin() + n_train);
  s.validation_index.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
  s.test_index.assign(perm.begin() + n_train + n_val, perm.end());
  for (auto i : s.train_index) s.train.push_back(records[i]);
  for (auto i : s.validation_index) s.validation.push_back(records[i]);
  for (auto i : s.test_index) s.test.push_back(records[i]);
  return s;
}

// Split manifest: "split-v1" header, then key lines and three index lists.
inline void write_split_manifest(std::ostream& os, const DatasetSplit& s) {
  os << "split-v1\n";
  os << "seed " << s.seed << "\n";
  os << "records " << (s.train_index.size() + s.validation_index.size() + s.test_index.size())
     << "\n";
  os << "users " << s.n_users << "\n";
  os << "items " << s.n_items << "\n";
  auto list = [&os](const char* name, const std::vector<std::size_t>& idx) {
    os << name << ' ' << idx.size() << '\n';
    for (std::size_t k = 0; k < idx.size(); ++k) os << (k ? " " : "") << idx[k];
    os << '\n';
  };
  list("train", s.train_index);
  list("validation", s.validation_index);
  list("test", s.test_index);
}

// Rebuilds a split from a manifest and the same source records.
inline DatasetSplit read_split_manifest(std::istream& is, const std::vector<RatingRecord>& records) {
  std::string header;
  if (!std::getline(is, header) || detail::trim(header) != "split-v1")
    throw IoError("split manifest: missing 'split-v1' header");
  DatasetSplit s;
  std::size_t n_records = 0;
  auto expect = [&is](const char* key) {
    std::string k;
    if (!(is >> k) || k != key) throw IoError(std::string("split manifest: expected '") + key + "'");
  };
  expect("seed");
  is >> s.seed;
  expect("records");
  is >> n_records;
  expect("users");
  is >> s.n_users;
  expect("items");
  is >> s.n_items;
  if (!is) throw IoError("split manifest: malformed header fields");
  if (n_records != records.size())
    throw ContractError("split manifest: built for " + std::to_string(n_records) +
                        " records, dataset has " + std::to_string(records.size()));
  auto read_list = [&](const char* name, std::vector<std::size_t>& idx,
                       std::vector<RatingRecord>& part) {
    expect(name);
    std::size_t count = 0;
    is >> count;
    idx.resize(count);
    for (auto& i : idx) {
      if (!(is >> i) || i >= records.size()) throw IoError("split manifest: bad index list");
      part.push_back(records[i]);
    }
  };
  read_list("train", s.train_index, s.train);
  read_list("validation", s.validation_index, s.validation);
  read_list("test", s.test_index, s.test);
  return s;
}

// Training-rating count per user id in [0, n_users).
inline std::vector<std::size_t> ratings_per_user(const std::vector<RatingRecord>& records,
                                                 std::size_t n_users) {
  std::vector<std::size_t> counts(n_users, 0);
  for (const auto& r : records) {
    if (r.user >= n_users) throw ContractError("user id out of range");
    ++counts[r.user];
  }
  return counts;
}

// Low: fewest training ratings; High: most; Med: counts closest to the
// median count. Each group has round(0.05 * eligible) users where eligible
// users are those with at least one training rating. Ties go to the lower
// user id. Groups are chosen Low, then High, then Med, each from users not
// already taken, so they never overlap.
inline UserGroups identify_user_groups(const std::vector<RatingRecord>& train,
                                       std::size_t n_users) {
  if (n_users < 60) throw ContractError("identify_user_groups: need at least 60 users");
  const auto counts = ratings_per_user(train, n_users);
  std::vector<std::uint32_t> eligible;
  for (std::uint32_t u = 0; u < n_users; ++u)
    if (counts[u] > 0) eligible.push_back(u);
  if (eligible.size() < 60)
    throw ContractError("identify_user_groups: fewer than 60 users have training ratings");
  const auto k = static_cast<std::size_t>(std::llround(0.05 * static_cast<double>(eligible.size())));

  std::vector<bool> taken(n_users, false);
  auto take = [&](std::vector<std::uint32_t> order, GroupLabel label) {
    UserGroup g{label, {}};
    for (auto u : order) {
      if (g.user_ids.size() == k) break;
      if (taken[u]) continue;
      taken[u] = true;
      g.user_ids.push_back(u);
    }
    std::sort(g.user_ids.begin(), g.user_ids.end());
    return g;
  };

  auto by_low = eligible;
  std::stable_sort(by_low.begin(), by_low.end(),
                   [&](auto a, auto b) { return counts[a] < counts[b]; });
  auto by_high = eligible;
  std::stable_sort(by_high.begin(), by_high.end(),
                   [&](auto a, auto b) { return counts[a] > counts[b]; });

  std::vector<double> sorted_counts;
  for (auto u : by_low) sorted_counts.push_back(static_cast<double>(counts[u]));
  const std::size_t m = sorted_counts.size();
  const double median = m % 2 ? sorted_counts[m / 2]
                              : 0.5 * (sorted_counts[m / 2 - 1] + sorted_counts[m / 2]);
  auto by_med = eligible;
  std::stable_sort(by_med.begin(), by_med.end(), [&](auto a, auto b) {
    return std::abs(static_cast<double>(counts[a]) - median) <
           std::abs(static_cast<double>(counts[b]) - median);
  });

  UserGroups groups;
  groups.low = take(by_low, GroupLabel::Low);
  groups.high = take(by_high, GroupLabel::High);
  groups.med = take(by_med, GroupLabel::Med);
  return groups;
}

// Number of ratings a user with `n` training ratings shares at budget beta.
inline std::size_t shared_count(std::size_t n, double beta) {
  const auto k = static_cast<std::size_t>(std::llround(beta * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n);
}

// Per-user subsampling without replacement. Each user's ratings are shuffled
// once under (seed, user) and the first shared_count() of them are kept, so
// for a fixed seed smaller budgets select subsets of larger ones. Records
// keep their order in `train`.
inline PrivacyBudgetSample sample_privacy_budget(const std::vector<RatingRecord>& train,
                                                 double beta, std::uint64_t seed) {
  if (!(beta > 0.0 && beta <= 1.0))
    throw ContractError("sample_privacy_budget: beta must lie in (0, 1]");
  std::map<std::uint32_t, std::vector<std::size_t>> by_user;
  for (std::size_t k = 0; k < train.size(); ++k) by_user[train[k].user].push_back(k);

  PrivacyBudgetSample out;
  out.beta = beta;
  std::vector<char> keep(train.size(), 0);
  for (auto& [user, rows] : by_user) {
    Rng rng(mix_seed(seed, user));
    rng.shuffle(std::span<std::size_t>(rows));
    const std::size_t k = shared_count(rows.size(), beta);
    for (std::size_t j = 0; j < k; ++j) keep[rows[j]] = 1;
    out.per_user_counts[user] = k;
  }
  for (std::size_t k = 0; k < train.size(); ++k)
    if (keep[k]) out.records.push_back(train[k]);
  return out;
}

}  // namespace metamf
