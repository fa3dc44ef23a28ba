#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

#include "koopdec/gramians.hpp"
#include "koopdec/parallel.hpp"

namespace koopdec {

/// Sum over unordered pairs of |kappa_i - kappa_j|.
inline double objective_spread(const std::vector<double>& kappas) {
    detail::require(!kappas.empty(), "invalid_argument", "spread needs at least one value");
    // Sorted form: sum_i (2i - (m-1)) * k_(i).
    std::vector<double> s = kappas;
    std::sort(s.begin(), s.end());
    const double m = static_cast<double>(s.size());
    double total = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) total += (2.0 * static_cast<double>(i) - (m - 1.0)) * s[i];
    return total;
}

inline double objective_maximin(const std::vector<double>& kappas) {
    detail::require(!kappas.empty(), "invalid_argument", "maximin needs at least one value");
    return *std::min_element(kappas.begin(), kappas.end());
}

enum class PartitionObjective { spread, maximin };

inline std::string to_string(PartitionObjective o) { return o == PartitionObjective::spread ? "spread" : "maximin"; }

inline PartitionObjective objective_from_string(const std::string& s) {
    if (s == "spread") return PartitionObjective::spread;
    if (s == "maximin") return PartitionObjective::maximin;
    detail::fail("invalid_argument", "unknown objective '" + s + "'");
}

/// Bit i set = unit i in the cluster.
using UnitMask = std::uint64_t;

struct MergeRecord {
    std::size_t round = 0;
    std::vector<UnitMask> first;
    std::vector<UnitMask> second;
    std::vector<std::size_t> permutation;
    std::vector<UnitMask> merged;
    double max_kappa = 0.0;
    bool adjacency_relaxed = false;
};

struct PartitionStats {
    std::size_t merge_rounds = 0;
    std::size_t max_permutations_per_round = 0;
    std::size_t max_kappa_evaluations_per_permutation = 0;
};

/// Clusters of physical states. Units are the atoms being grouped (single
/// states by default, or e.g. the (angle, speed) pair of one generator);
/// `unit_clusters` lists unit indices and `clusters` the expanded state
/// indices. Both lists have k entries; empty clusters are allowed.
/// `kappas` holds one score per nonempty cluster, in cluster order.
struct Partition {
    std::vector<std::vector<std::size_t>> unit_clusters;
    std::vector<StateSubset> clusters;
    std::vector<SubsetScore> kappas;
    double objective_spread = 0.0;
    double objective_maximin = 0.0;
    std::string method;
    std::vector<MergeRecord> history;
    PartitionStats stats;
};

struct PartitionOptions {
    double lambda = 1.0;
    /// Atoms to partition; empty means one unit per state coordinate.
    std::vector<StateSubset> units;
    /// Optional unit adjacency (units x units, nonzero = edge). When set, a
    /// merge permutation is admissible only if every slot that joins two
    /// nonempty parts joins adjacent units; if none is admissible the round
    /// falls back to all permutations.
    std::optional<Matrix> adjacency;
    /// Oracle guard on the number of candidate partitions.
    double oracle_limit = 1e6;
    /// Oracle searches partitions with exactly k nonempty blocks; when false,
    /// any number of blocks from 2 (or 1 when k = 1) up to k.
    bool oracle_exact_k = true;
};

/// Combined, normalized kappa evaluated on unions of units, memoized by mask.
class UnitKappa {
   public:
    UnitKappa(const KoopmanModel& model, const KoopmanGramians& grams, std::vector<StateSubset> units, double lambda)
        : model_(model), grams_(grams), units_(std::move(units)), lambda_(lambda) {
        const auto n = static_cast<std::size_t>(model.state_dim());
        if (units_.empty()) units_ = singleton_units(model.state_dim());
        detail::require(units_.size() <= 63, "invalid_argument", "at most 63 partition units are supported");
        std::vector<int> seen(n, 0);
        for (auto& u : units_) {
            detail::require(!u.empty(), "invalid_argument", "partition units must be nonempty");
            std::sort(u.begin(), u.end());
            for (auto i : u) {
                detail::require(i < n, "invalid_argument", "unit references a state out of range");
                detail::require(!seen[i]++, "invalid_argument", "partition units must be disjoint");
            }
        }
        for (auto s : seen) detail::require(s == 1, "invalid_argument", "partition units must cover every state");
        full_ = (UnitMask{1} << units_.size()) - 1;
        norm_ = singleton_normalization(model_, grams_, units_);
    }

    std::size_t unit_count() const { return units_.size(); }
    UnitMask full_mask() const { return full_; }
    const std::vector<StateSubset>& units() const { return units_; }
    const KappaNormalization& normalization() const { return norm_; }
    double lambda() const { return lambda_; }
    std::size_t evaluations() const { return evaluations_; }

    StateSubset states(UnitMask mask) const {
        StateSubset s;
        for (std::size_t u = 0; u < units_.size(); ++u)
            if (mask >> u & 1U) s.insert(s.end(), units_[u].begin(), units_[u].end());
        std::sort(s.begin(), s.end());
        return s;
    }

    static std::vector<std::size_t> unit_list(UnitMask mask) {
        std::vector<std::size_t> out;
        for (std::size_t u = 0; mask; ++u, mask >>= 1)
            if (mask & 1U) out.push_back(u);
        return out;
    }

    /// +inf for the full set (kappa undefined there), which any merge
    /// permutation avoids when it can.
    double kappa(UnitMask mask) {
        detail::require(mask != 0, "invalid_subset", "kappa of an empty cluster");
        if (mask == full_) return std::numeric_limits<double>::infinity();
        if (auto it = cache_.find(mask); it != cache_.end()) return it->second;
        ++evaluations_;
        double value = 0.0;
        try {
            value = kappa_combined(model_, grams_, states(mask), lambda_, norm_).kappa;
        } catch (const Error& e) {
            throw Error(e.code(), std::string(e.what()) + " [subset " + subset_label(states(mask)) + "]");
        }
        cache_.emplace(mask, value);
        return value;
    }

    SubsetScore score(UnitMask mask) const { return kappa_combined(model_, grams_, states(mask), lambda_, norm_); }

   private:
    const KoopmanModel& model_;
    const KoopmanGramians& grams_;
    std::vector<StateSubset> units_;
    double lambda_;
    UnitMask full_ = 0;
    KappaNormalization norm_;
    std::unordered_map<UnitMask, double> cache_;
    std::size_t evaluations_ = 0;
};

namespace partition_detail {

inline std::size_t lowest_unit(const std::vector<UnitMask>& slots) {
    UnitMask all = 0;
    for (auto s : slots) all |= s;
    return all ? static_cast<std::size_t>(std::countr_zero(all)) : 64;
}

/// k slots; empty slots carry kappa 0 and never enter the max.
struct Tuple {
    std::vector<UnitMask> slots;
    std::vector<double> values;
    double max_kappa = 0.0;
    std::size_t min_unit = 0;
};

/// Max-heap on max_kappa; ties go to the tuple holding the smallest unit.
struct TupleLess {
    bool operator()(const Tuple& a, const Tuple& b) const {
        if (a.max_kappa != b.max_kappa) return a.max_kappa < b.max_kappa;
        return a.min_unit > b.min_unit;
    }
};

inline bool adjacent(const Matrix& adj, UnitMask a, UnitMask b) {
    for (auto u : UnitKappa::unit_list(a))
        for (auto v : UnitKappa::unit_list(b))
            if (adj(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) != 0.0) return true;
    return false;
}

inline Partition finish(UnitKappa& kappa, const std::vector<UnitMask>& slots, std::string method) {
    Partition p;
    p.method = std::move(method);
    std::vector<double> combined;
    for (auto mask : slots) {
        p.unit_clusters.push_back(UnitKappa::unit_list(mask));
        p.clusters.push_back(kappa.states(mask));
        if (mask != 0) {
            detail::require(mask != kappa.full_mask() || kappa.unit_count() == 1, "incoherent_partition",
                            "k too large for coherent partition");
            p.kappas.push_back(kappa.score(mask));
            combined.push_back(p.kappas.back().kappa);
        }
    }
    p.objective_spread = objective_spread(combined);
    p.objective_maximin = objective_maximin(combined);
    return p;
}

}  // namespace partition_detail

/// Heap-merge multi-way partitioning with per-merge permutation search and
/// full kappa recomputation of every merged slot.
inline Partition multiway_partition(const KoopmanModel& model, const KoopmanGramians& grams, std::size_t k,
                                    const PartitionOptions& options = {}) {
    using partition_detail::Tuple;
    UnitKappa kappa(model, grams, options.units, options.lambda);
    const std::size_t n = kappa.unit_count();
    detail::require(k >= 2, "invalid_argument", "k must be at least 2");
    detail::require(k <= n, "invalid_argument",
                    "k = " + std::to_string(k) + " exceeds the number of units (" + std::to_string(n) + ")");
    if (options.adjacency) {
        detail::require(options.adjacency->rows() == static_cast<Eigen::Index>(n) &&
                            options.adjacency->cols() == static_cast<Eigen::Index>(n),
                        "dimension_mismatch", "adjacency must be units x units");
    }

    std::priority_queue<Tuple, std::vector<Tuple>, partition_detail::TupleLess> heap;
    for (std::size_t j = 0; j < n; ++j) {
        Tuple t;
        t.slots.assign(k, 0);
        t.values.assign(k, 0.0);
        t.slots[0] = UnitMask{1} << j;
        t.values[0] = kappa.kappa(t.slots[0]);
        t.max_kappa = t.values[0];
        t.min_unit = j;
        heap.push(std::move(t));
    }

    Partition result;
    PartitionStats stats;
    std::vector<MergeRecord> history;
    while (heap.size() > 1) {
        Tuple a = heap.top();
        heap.pop();
        Tuple b = heap.top();
        heap.pop();
        ++stats.merge_rounds;

        std::vector<std::size_t> perm(k);
        std::iota(perm.begin(), perm.end(), 0);
        auto admissible = [&](const std::vector<std::size_t>& p) {
            if (!options.adjacency) return true;
            for (std::size_t i = 0; i < k; ++i) {
                const UnitMask x = a.slots[i], y = b.slots[p[i]];
                if (x && y && !partition_detail::adjacent(*options.adjacency, x, y)) return false;
            }
            return true;
        };
        bool any_admissible = false;
        if (options.adjacency) {
            do {
                if (admissible(perm)) {
                    any_admissible = true;
                    break;
                }
            } while (std::next_permutation(perm.begin(), perm.end()));
            std::iota(perm.begin(), perm.end(), 0);
        }
        const bool relaxed = options.adjacency && !any_admissible;

        double best_max = std::numeric_limits<double>::infinity();
        std::vector<std::size_t> best_perm;
        std::size_t perms = 0;
        do {
            if (options.adjacency && !relaxed && !admissible(perm)) continue;
            ++perms;
            double worst = 0.0;
            std::size_t evals = 0;
            for (std::size_t i = 0; i < k; ++i) {
                const UnitMask merged = a.slots[i] | b.slots[perm[i]];
                if (!merged) continue;
                ++evals;
                worst = std::max(worst, kappa.kappa(merged));
            }
            stats.max_kappa_evaluations_per_permutation = std::max(stats.max_kappa_evaluations_per_permutation, evals);
            if (best_perm.empty() || worst < best_max) {
                best_max = worst;
                best_perm = perm;
            }
        } while (std::next_permutation(perm.begin(), perm.end()));
        stats.max_permutations_per_round = std::max(stats.max_permutations_per_round, perms);
        if (!std::isfinite(best_max)) {
            detail::fail("incoherent_partition", "k too large for coherent partition");
        }

        Tuple merged;
        std::vector<std::pair<double, UnitMask>> slots;
        for (std::size_t i = 0; i < k; ++i) {
            const UnitMask m = a.slots[i] | b.slots[best_perm[i]];
            slots.emplace_back(m ? kappa.kappa(m) : 0.0, m);
        }
        // Largest kappa first, empty slots last.
        std::stable_sort(slots.begin(), slots.end(), [](const auto& x, const auto& y) {
            if ((x.second == 0) != (y.second == 0)) return y.second == 0;
            if (x.first != y.first) return x.first > y.first;
            return std::countr_zero(x.second | (UnitMask{1} << 63)) < std::countr_zero(y.second | (UnitMask{1} << 63));
        });
        double min_nonempty = std::numeric_limits<double>::infinity();
        for (const auto& [v, m] : slots)
            if (m) min_nonempty = std::min(min_nonempty, v);
        for (const auto& [v, m] : slots) {
            merged.slots.push_back(m);
            merged.values.push_back(m ? (min_nonempty > 0.0 ? v / min_nonempty : v) : 0.0);
        }
        merged.max_kappa = merged.values.front();
        merged.min_unit = partition_detail::lowest_unit(merged.slots);

        history.push_back({stats.merge_rounds, a.slots, b.slots, best_perm, merged.slots, best_max, relaxed});
        heap.push(std::move(merged));
    }

    result = partition_detail::finish(kappa, heap.top().slots, "heuristic");
    result.history = std::move(history);
    result.stats = stats;
    return result;
}

/// Number of set partitions of n items into at most k (or exactly k)
/// nonempty blocks.
inline double partition_count(std::size_t n, std::size_t k, bool exact = false) {
    // Stirling numbers of the second kind by recurrence.
    std::vector<std::vector<double>> s(n + 1, std::vector<double>(k + 1, 0.0));
    s[0][0] = 1.0;
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = 1; j <= std::min(i, k); ++j)
            s[i][j] = static_cast<double>(j) * s[i - 1][j] + s[i - 1][j - 1];
    if (exact) return s[n][k];
    double total = 0.0;
    for (std::size_t j = 1; j <= k; ++j) total += s[n][j];
    return total;
}

/// Exhaustive optimum over all partitions of the units into exactly k
/// nonempty blocks (or at most k with oracle_exact_k = false), by
/// restricted-growth-string enumeration. With k >= 2 the single-block
/// partition is never a candidate since kappa is undefined on the full set.
/// Ties go to the lexicographically smallest restricted-growth string.
inline Partition brute_force_partition(const KoopmanModel& model, const KoopmanGramians& grams, std::size_t k,
                                       PartitionObjective objective, const PartitionOptions& options = {}) {
    UnitKappa kappa(model, grams, options.units, options.lambda);
    const std::size_t n = kappa.unit_count();
    detail::require(k >= 1 && k <= n, "invalid_argument", "k must be in [1, number of units]");
    detail::require(partition_count(n, k, options.oracle_exact_k) <= options.oracle_limit, "oracle_too_large",
                    "instance too large for oracle");

    // kappa of every nonempty proper mask, precomputed once.
    const UnitMask full = kappa.full_mask();
    std::vector<double> table(static_cast<std::size_t>(full) + 1, std::numeric_limits<double>::infinity());
    {
        const std::size_t count = static_cast<std::size_t>(full) - 1;
        std::vector<double> values(count);
        const UnitKappa& shared = kappa;
        parallel_for(count, [&](std::size_t i) {
            const auto mask = static_cast<UnitMask>(i + 1);
            values[i] = kappa_combined(model, grams, shared.states(mask), shared.lambda(), shared.normalization()).kappa;
        });
        for (std::size_t i = 0; i < count; ++i) table[i + 1] = values[i];
    }

    std::vector<std::size_t> rgs(n, 0), prefix_max(n, 0);
    std::vector<UnitMask> blocks(k, 0);
    std::vector<double> vals;
    bool have_best = false;
    double best_value = 0.0;
    std::vector<UnitMask> best_blocks;

    auto evaluate = [&]() {
        std::fill(blocks.begin(), blocks.end(), 0);
        for (std::size_t i = 0; i < n; ++i) blocks[rgs[i]] |= UnitMask{1} << i;
        vals.clear();
        for (auto b : blocks)
            if (b) {
                if (b == full && k >= 2) return;
                vals.push_back(b == full ? 0.0 : table[b]);
            }
        if (options.oracle_exact_k && vals.size() != k) return;
        const double v = objective == PartitionObjective::spread ? objective_spread(vals) : objective_maximin(vals);
        const bool better = !have_best || (objective == PartitionObjective::spread ? v < best_value : v > best_value);
        if (better) {
            have_best = true;
            best_value = v;
            best_blocks = blocks;
        }
    };

    // Lexicographic RGS enumeration with blocks capped at k.
    while (true) {
        evaluate();
        std::size_t i = n;
        while (i-- > 1) {
            if (rgs[i] <= prefix_max[i - 1] && rgs[i] + 1 < k) break;
        }
        if (i == 0 || i >= n) break;
        ++rgs[i];
        prefix_max[i] = std::max(prefix_max[i - 1], rgs[i]);
        for (std::size_t j = i + 1; j < n; ++j) {
            rgs[j] = 0;
            prefix_max[j] = prefix_max[i];
        }
    }
    detail::require(have_best, "incoherent_partition", "no admissible partition");
    auto p = partition_detail::finish(kappa, best_blocks, "oracle");
    return p;
}

/// Partition report: clusters (1-based state indices), units, per-cluster
/// kappa_o / kappa_c / kappa, both objectives and the merge history.
inline io::json partition_to_json(const Partition& p, const UnitKappa* kappa = nullptr) {
    io::json clusters = io::json::array();
    std::size_t score_index = 0;
    for (std::size_t c = 0; c < p.clusters.size(); ++c) {
        io::json states = io::json::array(), units = io::json::array();
        for (auto s : p.clusters[c]) states.push_back(s + 1);
        for (auto u : p.unit_clusters[c]) units.push_back(u + 1);
        io::json entry{{"states", states}, {"units", units}};
        if (!p.clusters[c].empty()) {
            const auto& sc = p.kappas[score_index++];
            entry["kappa_o"] = io::round12(sc.kappa_o);
            entry["kappa_c"] = io::round12(sc.kappa_c);
            entry["kappa"] = io::round12(sc.kappa);
        }
        clusters.push_back(std::move(entry));
    }
    io::json history = io::json::array();
    auto masks = [](const std::vector<UnitMask>& ms) {
        io::json out = io::json::array();
        for (auto m : ms) {
            io::json units = io::json::array();
            for (auto u : UnitKappa::unit_list(m)) units.push_back(u + 1);
            out.push_back(units);
        }
        return out;
    };
    for (const auto& h : p.history) {
        history.push_back({{"round", h.round},
                           {"first", masks(h.first)},
                           {"second", masks(h.second)},
                           {"permutation", h.permutation},
                           {"merged", masks(h.merged)},
                           {"max_kappa", io::round12(h.max_kappa)},
                           {"adjacency_relaxed", h.adjacency_relaxed}});
    }
    io::json j{{"method", p.method},
               {"clusters", clusters},
               {"objective_spread", io::round12(p.objective_spread)},
               {"objective_maximin", io::round12(p.objective_maximin)},
               {"merge_history", history}};
    if (!p.kappas.empty()) {
        j["lambda"] = p.kappas.front().lambda;
        j["normalization"] = {{"mean_kappa_o", io::round12(p.kappas.front().normalization.mean_o)},
                              {"mean_kappa_c", io::round12(p.kappas.front().normalization.mean_c)}};
    }
    (void)kappa;
    return j;
}

inline std::string partition_summary_csv(const Partition& p) {
    std::string out = "cluster,units,states,kappa_o,kappa_c,kappa\n";
    std::size_t score_index = 0;
    for (std::size_t c = 0; c < p.clusters.size(); ++c) {
        std::string units, states;
        for (auto u : p.unit_clusters[c]) units += (units.empty() ? "" : " ") + std::to_string(u + 1);
        for (auto s : p.clusters[c]) states += (states.empty() ? "" : " ") + std::to_string(s + 1);
        out += std::to_string(c + 1) + ',' + units + ',' + states;
        if (!p.clusters[c].empty()) {
            const auto& sc = p.kappas[score_index++];
            out += ',' + io::format_real(sc.kappa_o) + ',' + io::format_real(sc.kappa_c) + ',' + io::format_real(sc.kappa);
        } else {
            out += ",,,";
        }
        out += '\n';
    }
    return out;
}

}  // namespace koopdec
