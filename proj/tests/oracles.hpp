#pragma once

// Independent reference implementations used by the unit and acceptance tests.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "xctsr/defecteval.hpp"
#include "xctsr/defects.hpp"

namespace oracle {

using xctsr::DefectRecord;

// Pairwise voxel overlaps by set intersection.
inline std::map<std::pair<int, int>, std::int64_t> overlaps(const std::vector<DefectRecord>& detected,
                                                            const std::vector<DefectRecord>& truth) {
  std::map<std::pair<int, int>, std::int64_t> out;
  for (const auto& t : truth) {
    const std::set<std::int64_t> tv(t.voxel_set.begin(), t.voxel_set.end());
    for (const auto& d : detected) {
      std::int64_t n = 0;
      for (auto v : d.voxel_set) n += tv.count(v);
      if (n > 0) out[{t.id, d.id}] = n;
    }
  }
  return out;
}

// Exhaustive search over all one-to-one assignments of positive-overlap
// pairs, keeping the one whose overlaps sorted in descending order are
// lexicographically largest. Returns (truth id, detected id) pairs.
inline std::set<std::pair<int, int>> best_assignment(const std::vector<DefectRecord>& detected,
                                                     const std::vector<DefectRecord>& truth) {
  const auto ov = overlaps(detected, truth);
  std::vector<std::pair<std::pair<int, int>, std::int64_t>> edges(ov.begin(), ov.end());
  std::vector<std::int64_t> best_key;
  std::set<std::pair<int, int>> best, cur;
  std::set<int> used_t, used_d;
  std::function<void(std::size_t)> rec = [&](std::size_t i) {
    if (i == edges.size()) {
      std::vector<std::int64_t> key;
      for (const auto& p : cur) key.push_back(ov.at(p));
      std::sort(key.rbegin(), key.rend());
      if (key > best_key) {
        best_key = key;
        best = cur;
      }
      return;
    }
    rec(i + 1);
    const auto [t, d] = edges[i].first;
    if (used_t.count(t) || used_d.count(d)) return;
    used_t.insert(t);
    used_d.insert(d);
    cur.insert({t, d});
    rec(i + 1);
    cur.erase({t, d});
    used_t.erase(t);
    used_d.erase(d);
  };
  rec(0);
  return best;
}

// Random instance on a 1D index space: disjoint truth sets and detections
// that each cover parts of up to three truth sets plus background.
struct Instance {
  std::vector<DefectRecord> truth, detected;
};

inline DefectRecord record(int id, std::vector<std::int64_t> vox) {
  std::sort(vox.begin(), vox.end());
  vox.erase(std::unique(vox.begin(), vox.end()), vox.end());
  return xctsr::make_record(id, std::move(vox), {1, 1, 100000}, 1.0);
}

inline Instance random_instance(std::mt19937_64& rng, int max_defects = 10) {
  Instance in;
  std::uniform_int_distribution<int> count(1, max_defects), size(4, 40);
  const int nt = count(rng), nd = count(rng);
  std::int64_t base = 0;
  std::vector<std::vector<std::int64_t>> tv;
  for (int i = 0; i < nt; ++i) {
    std::vector<std::int64_t> v;
    const int s = size(rng);
    for (int k = 0; k < s; ++k) v.push_back(base + k);
    base += s + 5;
    tv.push_back(v);
    in.truth.push_back(record(i + 1, v));
  }
  std::uniform_int_distribution<int> pick(0, nt - 1), extra(0, 3), touches(1, 3);
  for (int j = 0; j < nd; ++j) {
    std::vector<std::int64_t> v;
    const int k = touches(rng);
    for (int m = 0; m < k; ++m) {
      const auto& src = tv[std::size_t(pick(rng))];
      std::uniform_int_distribution<std::size_t> take(1, src.size());
      const std::size_t n = take(rng);
      std::vector<std::int64_t> s = src;
      std::shuffle(s.begin(), s.end(), rng);
      v.insert(v.end(), s.begin(), s.begin() + long(n));
    }
    for (int e = extra(rng); e > 0; --e) v.push_back(base + 1000 + j * 10 + e);
    in.detected.push_back(record(100 + j, v));
  }
  return in;
}

inline bool overlaps_distinct(const Instance& in) {
  std::set<std::int64_t> seen;
  for (const auto& [k, v] : overlaps(in.detected, in.truth)) {
    if (!seen.insert(v).second) return false;
  }
  return true;
}

// Matches from the evaluator as (truth id, detected id) pairs.
inline std::set<std::pair<int, int>> matched_pairs(const xctsr::BinnedDetectionReport& r) {
  std::set<std::pair<int, int>> out;
  for (const auto& m : r.matches) {
    if (m.truth_id && m.detected_id) out.insert({*m.truth_id, *m.detected_id});
  }
  return out;
}

// Runs `trials` random distinct-overlap instances; returns the number where
// the evaluator's matching differs from the exhaustive oracle.
inline int matching_disagreements(std::uint64_t seed, int trials) {
  std::mt19937_64 rng(seed);
  int bad = 0, done = 0;
  while (done < trials) {
    const Instance in = random_instance(rng);
    if (!overlaps_distinct(in)) continue;
    ++done;
    const auto rep = xctsr::match_and_score(in.detected, in.truth, {0.0, 1e9});
    if (matched_pairs(rep) != best_assignment(in.detected, in.truth)) ++bad;
  }
  return bad;
}

}  // namespace oracle
