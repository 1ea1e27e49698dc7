#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "otree/params.hpp"

namespace otree {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/* ------------------------------------------------------------------------- */
/*  Shared numeric helpers                                                    */
/* ------------------------------------------------------------------------- */

// Number of observations treated as a distribution tail:
// floor(n*p + 2*sqrt(n*p*(1-p)) + 1).
inline std::size_t tail_count(std::size_t n, double p_o) {
    double nd = double(n);
    return std::size_t(std::floor(nd * p_o + 2.0 * std::sqrt(nd * p_o * (1.0 - p_o)) + 1.0));
}

// Mean and sample sd (Bessel) with compensated accumulation.
inline std::pair<double, double> mean_sd(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n == 0) return {0.0, 0.0};
    long double mean = 0.0L, ssq = 0.0L, prev = x[0];
    for (std::size_t i = 0; i < n; i++) {
        long double v = x[i];
        mean += (v - mean) / (long double)(i + 1);
        ssq += (v - mean) * (v - prev);
        prev = mean;
    }
    double sd = n > 1 ? double(std::sqrt(std::max(ssq, 0.0L) / (long double)(n - 1))) : 0.0;
    return {double(mean), sd};
}

// Percentile with linear interpolation between closest ranks; input sorted.
inline double percentile_sorted(std::span<const double> sorted, double p) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    double h = double(n - 1) * p;
    std::size_t lo = std::size_t(std::floor(h));
    std::size_t hi = std::min(lo + 1, n - 1);
    return sorted[lo] + (h - double(lo)) * (sorted[hi] - sorted[lo]);
}

/*  Trimmed moments: mean/sd with the n_tail smallest and largest values
 *  excluded, sd then inflated by (n + n_tail)/(n - n_tail). Returns nullopt
 *  when the sample is too small to trim.
 */
inline std::optional<std::pair<double, double>> trimmed_moments(std::span<const double> x,
                                                                std::size_t n_tail) {
    const std::size_t n = x.size();
    if (n <= 2 * n_tail) return std::nullopt;
    std::vector<double> sorted(x.begin(), x.end());
    std::sort(sorted.begin(), sorted.end());
    auto [mu, sd] = mean_sd(std::span<const double>(sorted).subspan(n_tail, n - 2 * n_tail));
    sd *= double(n + n_tail) / double(n - n_tail);
    return std::make_pair(mu, sd);
}

/* ------------------------------------------------------------------------- */
/*  Transforms and tail detection                                             */
/* ------------------------------------------------------------------------- */

enum class TransformKind : std::uint8_t { None, Log, Exp };

/*  Monotone transform applied to a numeric target before flagging. Log maps
 *  x -> log(x + offset) with offset = eps - min(x); Exp maps the centered
 *  z-score, x -> exp((x - mu)/sigma), with the central moments it was decided
 *  under.
 */
struct Transform {
    TransformKind kind = TransformKind::None;
    double log_offset = 0.0;
    double exp_mu = 0.0;
    double exp_sigma = 1.0;

    double apply(double v) const {
        switch (kind) {
            case TransformKind::None: return v;
            case TransformKind::Log: {
                double arg = v + log_offset;
                return arg > 0.0 ? std::log(arg) : -kInf;
            }
            case TransformKind::Exp: return std::exp((v - exp_mu) / exp_sigma);
        }
        return v;
    }
};

struct TailDecision {
    Transform transform;
    bool left_tail = false;
    bool right_tail = false;
    std::vector<double> transformed;  // empty when no transform applied
};

namespace detail {

// Central moments of the interquartile slice, sd inflated by 2.5.
// Returns false when the slice is degenerate (zero spread).
inline bool central_moments(std::span<const double> sorted, double& mu, double& sigma) {
    double p25 = percentile_sorted(sorted, 0.25);
    double p75 = percentile_sorted(sorted, 0.75);
    auto lo = std::lower_bound(sorted.begin(), sorted.end(), p25);
    auto hi = std::upper_bound(sorted.begin(), sorted.end(), p75);
    if (lo >= hi) return false;
    auto [m, s] = mean_sd(std::span<const double>(&*lo, std::size_t(hi - lo)));
    mu = m;
    sigma = 2.5 * s;
    return sigma > 0.0;
}

}  // namespace detail

/*  Long-tail detection on a numeric sample. When an order statistic n_tail
 *  places from either end lies beyond z_tail central standardized units, a
 *  candidate transform (exp of z-scores for the left side, log shifted above
 *  the minimum for the right side) is tried and kept iff it pulls that order
 *  statistic back inside; otherwise the side is flagged as a long tail. When
 *  the exp transform is kept, the right side is re-checked on the transformed
 *  sample but no second transform is stacked on top.
 */
inline TailDecision check_dist_tails(std::span<const double> x, const Params& params) {
    TailDecision out;
    const std::size_t n = x.size();
    const std::size_t n_tail = tail_count(n, params.p_outliers);
    if (n <= 2 * n_tail) return out;

    std::vector<double> sorted(x.begin(), x.end());
    std::sort(sorted.begin(), sorted.end());
    double mu_cen = 0.0, sigma_cen = 0.0;
    if (!detail::central_moments(sorted, mu_cen, sigma_cen)) return out;

    const double z_low = (sorted[n_tail - 1] - mu_cen) / sigma_cen;
    const double z_high = (sorted[n - n_tail] - mu_cen) / sigma_cen;

    // candidate evaluation: central z of the transformed order statistic
    auto candidate_z = [&](const std::vector<double>& t_sorted, std::size_t idx,
                           double& z_at) -> bool {
        double mu = 0.0, sg = 0.0;
        if (!detail::central_moments(t_sorted, mu, sg)) return false;
        z_at = (t_sorted[idx] - mu) / sg;
        return true;
    };

    if (z_low < -params.z_tail) {
        bool fixed = false;
        if (params.transforms) {
            std::vector<double> t(n);
            for (std::size_t i = 0; i < n; i++) t[i] = std::exp((sorted[i] - mu_cen) / sigma_cen);
            double z_at = 0.0;
            if (candidate_z(t, n_tail - 1, z_at) && z_at >= -params.z_tail) {
                out.transform.kind = TransformKind::Exp;
                out.transform.exp_mu = mu_cen;
                out.transform.exp_sigma = sigma_cen;
                out.transformed.resize(n);
                for (std::size_t i = 0; i < n; i++) out.transformed[i] = out.transform.apply(x[i]);
                sorted = t;  // already sorted: exp of a sorted sample
                fixed = true;
            }
        }
        if (!fixed) out.left_tail = true;
    }

    if (z_high > params.z_tail) {
        if (out.transform.kind == TransformKind::Exp) {
            double z_at = 0.0;
            if (!candidate_z(sorted, n - n_tail, z_at) || z_at > params.z_tail)
                out.right_tail = true;
        } else {
            bool fixed = false;
            if (params.transforms) {
                const double offset = params.eps_log - sorted.front();
                std::vector<double> t(n);
                for (std::size_t i = 0; i < n; i++) t[i] = std::log(sorted[i] + offset);
                double z_at = 0.0;
                if (candidate_z(t, n - n_tail, z_at) && z_at <= params.z_tail) {
                    out.transform.kind = TransformKind::Log;
                    out.transform.log_offset = offset;
                    out.transformed.resize(n);
                    for (std::size_t i = 0; i < n; i++) out.transformed[i] = out.transform.apply(x[i]);
                    fixed = true;
                }
            }
            if (!fixed) out.right_tail = true;
        }
    }
    return out;
}

/*  GritBot's log-transform criterion: positive minimum, linear quartile ratio
 *  below one, and closer-to-symmetric quartiles after taking logs.
 */
inline bool check_log_transform_legacy(std::span<const double> x, double eps_legacy) {
    if (x.empty()) return false;
    std::vector<double> sorted(x.begin(), x.end());
    std::sort(sorted.begin(), sorted.end());
    if (!(sorted.front() > eps_legacy)) return false;
    double p25 = percentile_sorted(sorted, 0.25);
    double p50 = percentile_sorted(sorted, 0.50);
    double p75 = percentile_sorted(sorted, 0.75);
    double den_lin = p75 - p50;
    double den_log = std::log(p75) - std::log(p50);
    if (den_lin == 0.0 || den_log == 0.0) return false;
    double r1 = (std::log(p50) - std::log(p25)) / den_log;
    double r2 = (p50 - p25) / den_lin;
    return r2 < 1.0 && std::fabs(r1 - 1.0) < std::fabs(r2 - 1.0);
}

// Legacy-compat tail handling: Alg-3 decides a plain log transform first, the
// tail flags are then computed on the (possibly transformed) sample with no
// further transform attempts.
inline TailDecision check_dist_tails_legacy(std::span<const double> x, const Params& params) {
    std::vector<double> work;
    Transform tr;
    if (params.transforms && check_log_transform_legacy(x, params.eps_legacy)) {
        tr.kind = TransformKind::Log;
        tr.log_offset = 0.0;
        work.resize(x.size());
        for (std::size_t i = 0; i < x.size(); i++) work[i] = tr.apply(x[i]);
    }
    Params no_transforms = params;
    no_transforms.transforms = false;
    TailDecision out = check_dist_tails(work.empty() ? x : std::span<const double>(work), no_transforms);
    out.transform = tr;
    out.transformed = std::move(work);
    return out;
}

/* ------------------------------------------------------------------------- */
/*  Numeric outlier flagging (confidence interval + gap)                      */
/* ------------------------------------------------------------------------- */

struct SampleFlag {
    std::size_t index;  // position in the analyzed sample
    double score;       // |z| for numeric, proportion-vs-bound ratio for categorical
    int direction;      // -1 low, +1 high, 0 categorical
};
using FlagSet = std::vector<SampleFlag>;

struct DisplayStats {
    double mean = 0.0, sd = 0.0;
    double min_nonoutlier = 0.0, max_nonoutlier = 0.0;
    double pct_below = 1.0, pct_above = 1.0;  // fractions of the subsample
};

struct NumericStats {
    std::size_t n = 0;
    std::size_t n_tail = 0;
    double mu_adj = 0.0;
    double sigma_adj = 0.0;
    Transform transform;
    bool has_left_tail = false;
    bool has_right_tail = false;
    double lo_thr = -kInf;  // z-space flagging thresholds for new data
    double hi_thr = kInf;
    DisplayStats display;   // always in the untransformed scale
};

struct NumericFlagResult {
    FlagSet flags;  // indices into the sample passed in
    NumericStats stats;
};

/*  Flags values whose trimmed z-score exceeds z_outlier with a standardized
 *  gap of at least z_gap to the next value toward the center, at most n_tail
 *  per side. Sides with an untransformed long tail are skipped. `x` is the
 *  working (possibly transformed) sample; `x_orig` the original values used
 *  for display statistics.
 */
inline NumericFlagResult flag_outliers_numeric(std::span<const double> x,
                                               std::span<const double> x_orig,
                                               const Params& params,
                                               bool has_left_tail, bool has_right_tail) {
    NumericFlagResult out;
    NumericStats& st = out.stats;
    const std::size_t n = x.size();
    st.n = n;
    st.n_tail = tail_count(n, params.p_outliers);
    st.has_left_tail = has_left_tail;
    st.has_right_tail = has_right_tail;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t(0));
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return x[a] < x[b] || (x[a] == x[b] && a < b);
    });

    auto moments = trimmed_moments(x, st.n_tail);
    std::vector<char> flagged(n, 0);
    if (moments) {
        st.mu_adj = moments->first;
        st.sigma_adj = moments->second;
        if (st.sigma_adj > 0.0) {
            auto z = [&](std::size_t pos) { return (x[order[pos]] - st.mu_adj) / st.sigma_adj; };
            for (std::size_t i = 1; i <= st.n_tail && i < n; i++) {
                if (!has_left_tail) {
                    double zi = z(i - 1);
                    if (zi <= -params.z_outlier && z(i) - zi >= params.z_gap) {
                        flagged[order[i - 1]] = 1;
                        out.flags.push_back({order[i - 1], std::fabs(zi), -1});
                    }
                }
                if (!has_right_tail) {
                    double zi = z(n - i);
                    if (zi >= params.z_outlier && zi - z(n - i - 1) >= params.z_gap) {
                        flagged[order[n - i]] = 1;
                        out.flags.push_back({order[n - i], zi, +1});
                    }
                }
            }
        }
    }

    // display statistics and scoring thresholds from the non-outliers
    std::vector<double> keep_orig;
    keep_orig.reserve(n);
    double min_keep_w = kInf, max_keep_w = -kInf;
    double min_keep_o = kInf, max_keep_o = -kInf;
    for (std::size_t i = 0; i < n; i++) {
        if (flagged[i]) continue;
        keep_orig.push_back(x_orig[i]);
        min_keep_w = std::min(min_keep_w, x[i]);
        max_keep_w = std::max(max_keep_w, x[i]);
        min_keep_o = std::min(min_keep_o, x_orig[i]);
        max_keep_o = std::max(max_keep_o, x_orig[i]);
    }
    if (!keep_orig.empty()) {
        auto [dm, dsd] = mean_sd(keep_orig);
        st.display.mean = dm;
        st.display.sd = dsd;
        st.display.min_nonoutlier = min_keep_o;
        st.display.max_nonoutlier = max_keep_o;
        std::size_t below = 0, above = 0;
        for (std::size_t i = 0; i < n; i++) {
            below += x_orig[i] <= max_keep_o;
            above += x_orig[i] >= min_keep_o;
        }
        st.display.pct_below = double(below) / double(n);
        st.display.pct_above = double(above) / double(n);
    }

    // New data are flagged past the extreme non-outlier z by at least z_gap,
    // and never inside the z_outlier band; long-tail sides are unbounded.
    if (!moments) {
        st.lo_thr = -kInf;
        st.hi_thr = kInf;
    } else if (st.sigma_adj > 0.0 && !keep_orig.empty()) {
        double z_min = (min_keep_w - st.mu_adj) / st.sigma_adj;
        double z_max = (max_keep_w - st.mu_adj) / st.sigma_adj;
        st.lo_thr = std::min(z_min - params.z_gap, -params.z_outlier);
        st.hi_thr = std::max(z_max + params.z_gap, params.z_outlier);
    } else {
        // constant sample: any deviation from the stored mean is off the scale
        st.lo_thr = -params.z_outlier;
        st.hi_thr = params.z_outlier;
    }
    if (has_left_tail) st.lo_thr = -kInf;
    if (has_right_tail) st.hi_thr = kInf;
    return out;
}

/* ------------------------------------------------------------------------- */
/*  Categorical outlier flagging                                              */
/* ------------------------------------------------------------------------- */

/*  Distribution summary of one categorical column: per-category counts and
 *  proportions plus, when built over the full data, the priors, lower expected
 *  proportion bounds, and the prior assigned to a hypothetical new category.
 */
struct CategStats {
    std::size_t m = 0;  // number of schema categories
    std::vector<std::size_t> counts;
    std::vector<double> proportions;
    std::vector<double> priors;
    std::size_t n_prior = 0;
    std::vector<double> p_low;
    double new_category_prior = 0.0;
};

inline CategStats make_categ_priors(std::span<const int> codes, std::size_t m, const Params& params) {
    CategStats st;
    st.m = m;
    st.counts.assign(m, 0);
    for (int c : codes)
        if (c >= 0 && std::size_t(c) < m) st.counts[c]++;
    st.n_prior = std::accumulate(st.counts.begin(), st.counts.end(), std::size_t(0));
    st.proportions.assign(m, 0.0);
    st.priors.assign(m, 0.0);
    st.p_low.assign(m, 0.0);
    for (std::size_t c = 0; c < m; c++) {
        double p = st.n_prior ? double(st.counts[c]) / double(st.n_prior) : 0.0;
        st.proportions[c] = p;
        st.priors[c] = p;
        double se = st.n_prior ? std::sqrt(p * (1.0 - p) / double(st.n_prior)) : 0.0;
        st.p_low[c] = std::min(p - params.z_normal * se, p / 2.0);
    }
    st.new_category_prior = 1.0 / double(st.n_prior + 1);
    return st;
}

inline double categ_p_low(double prior, std::size_t n_prior, const Params& params) {
    double se = n_prior ? std::sqrt(prior * (1.0 - prior) / double(n_prior)) : 0.0;
    return std::min(prior - params.z_normal * se, prior / 2.0);
}

namespace detail {

/*  Core of the conditioned categorical rule: which single category, if any,
 *  gets flagged in a subsample with the given per-category counts. Proportions
 *  are sorted ascending (ties by category code); the tail cutoff is the
 *  largest position with both a wide standard-error gap to the next proportion
 *  and less than half of it; when the total count below the cutoff stays under
 *  n_tail, the first category whose proportion falls below its prior-derived
 *  lower bound is flagged.
 */
inline std::optional<std::size_t> categ_outlier_category(std::span<const std::size_t> counts,
                                                         std::span<const double> p_low,
                                                         const Params& params,
                                                         double* score_out = nullptr) {
    std::size_t n = 0;
    std::vector<std::size_t> present;
    for (std::size_t c = 0; c < counts.size(); c++) {
        n += counts[c];
        if (counts[c] > 0) present.push_back(c);
    }
    if (n == 0 || present.size() < 2) return std::nullopt;

    std::sort(present.begin(), present.end(), [&](std::size_t a, std::size_t b) {
        return counts[a] < counts[b] || (counts[a] == counts[b] && a < b);
    });
    const std::size_t m = present.size();
    std::vector<double> p(m);
    for (std::size_t i = 0; i < m; i++) p[i] = double(counts[present[i]]) / double(n);

    std::size_t m_tail = m;
    for (std::size_t i = 0; i + 1 < m; i++) {
        double se = std::sqrt(std::max(p[i] * (1.0 - p[i]), p[i + 1] * (1.0 - p[i + 1])) / double(n));
        if (p[i + 1] - p[i] > params.z_normal * se && p[i + 1] / 2.0 > p[i]) m_tail = i + 1;
    }
    if (m_tail >= m) return std::nullopt;

    double tail_mass = 0.0;
    for (std::size_t i = 0; i < m_tail; i++) tail_mass += p[i];
    if (!(double(n) * tail_mass < double(tail_count(n, params.p_outliers)))) return std::nullopt;

    for (std::size_t i = 0; i < m_tail; i++) {
        if (p[i] < p_low[present[i]]) {
            if (score_out) *score_out = p_low[present[i]] > 0.0 ? p[i] / p_low[present[i]] : 0.0;
            return present[i];
        }
    }
    return std::nullopt;
}

}  // namespace detail

/*  Outcome of flagging one conditioned categorical subsample, including the
 *  would-flag verdicts used when scoring new data: categories absent from the
 *  subsample (evaluated at their real prior) and a hypothetical never-seen
 *  category (evaluated at prior 1/(n_prior + 1)).
 */
struct CategFlagResult {
    FlagSet flags;
    std::size_t n = 0;
    std::vector<std::size_t> counts;    // per schema category
    std::vector<std::int8_t> status;    // 1 flagged, -1 would flag if added, 0 normal
    std::vector<double> scores;         // per category, 0 where status == 0
    bool new_category_flagged = false;
    double new_category_score = 0.0;
    double pct_common = 1.0;            // share of the subsample outside flagged categories
};

namespace detail {

// Simulates adding one observation of `cat` (or of a brand-new category when
// cat == counts.size()) and reports whether the conditioned rule flags it.
inline bool categ_would_flag_added(std::span<const std::size_t> counts,
                                   std::span<const double> priors, std::size_t n_prior,
                                   std::size_t cat, double new_prior, const Params& params,
                                   double* score_out) {
    std::vector<std::size_t> sim(counts.begin(), counts.end());
    std::vector<double> p_low(counts.size() + 1, 0.0);
    for (std::size_t c = 0; c < counts.size(); c++)
        p_low[c] = categ_p_low(priors[c], n_prior, params);
    if (cat == counts.size()) {
        sim.push_back(1);
        p_low[cat] = categ_p_low(new_prior, n_prior + 1, params);
    } else {
        sim[cat]++;
    }
    double score = 0.0;
    auto hit = categ_outlier_category(sim, p_low, params, &score);
    if (hit && *hit == cat) {
        if (score_out) *score_out = score;
        return true;
    }
    return false;
}

}  // namespace detail

/*  Conditioned categorical flagging over a subsample, judging observed
 *  proportions against bounds derived from the full-data priors.
 */
inline CategFlagResult flag_outliers_categ(std::span<const int> codes, const CategStats& priors,
                                           const Params& params) {
    CategFlagResult out;
    out.counts.assign(priors.m, 0);
    for (int c : codes)
        if (c >= 0 && std::size_t(c) < priors.m) out.counts[c]++;
    out.n = std::accumulate(out.counts.begin(), out.counts.end(), std::size_t(0));
    out.status.assign(priors.m, 0);
    out.scores.assign(priors.m, 0.0);
    if (out.n == 0) return out;

    double score = 0.0;
    auto hit = detail::categ_outlier_category(out.counts, priors.p_low, params, &score);
    if (hit) {
        out.status[*hit] = 1;
        out.scores[*hit] = score;
        for (std::size_t i = 0; i < codes.size(); i++)
            if (codes[i] >= 0 && std::size_t(codes[i]) == *hit)
                out.flags.push_back({i, score, 0});
        out.pct_common = double(out.n - out.counts[*hit]) / double(out.n);
    }

    for (std::size_t c = 0; c < priors.m; c++) {
        if (out.counts[c] > 0 || priors.counts[c] == 0) continue;
        double s = 0.0;
        if (detail::categ_would_flag_added(out.counts, priors.priors, priors.n_prior, c,
                                           0.0, params, &s)) {
            out.status[c] = -1;
            out.scores[c] = s;
        }
    }
    out.new_category_flagged = detail::categ_would_flag_added(
        out.counts, priors.priors, priors.n_prior, priors.m, priors.new_category_prior, params,
        &out.new_category_score);
    return out;
}

namespace detail {

inline std::size_t root_categ_max_allowed(std::size_t n, const Params& params) {
    if (n < params.root_categ_small_n) return 1;
    if (n < params.root_categ_large_n) return 2;
    return 3;
}

// Root rule core: the least common category qualifies iff the sample is large,
// its count is tiny, and the next most common category is well populated.
inline std::optional<std::size_t> root_categ_outlier_category(std::span<const std::size_t> counts,
                                                              const Params& params) {
    std::size_t n = 0;
    std::vector<std::size_t> present;
    for (std::size_t c = 0; c < counts.size(); c++) {
        n += counts[c];
        if (counts[c] > 0) present.push_back(c);
    }
    if (n < 1000 || present.size() < 2) return std::nullopt;
    std::sort(present.begin(), present.end(), [&](std::size_t a, std::size_t b) {
        return counts[a] < counts[b] || (counts[a] == counts[b] && a < b);
    });
    if (counts[present[0]] > root_categ_max_allowed(n, params)) return std::nullopt;
    if (counts[present[1]] < 250) return std::nullopt;
    return present[0];
}

}  // namespace detail

/*  Root-level categorical flagging over the full, unconditioned column.
 *  New-category handling follows the same rule with a single added
 *  observation.
 */
inline CategFlagResult flag_outliers_categ_root(std::span<const int> codes, std::size_t m,
                                                const Params& params) {
    CategFlagResult out;
    out.counts.assign(m, 0);
    for (int c : codes)
        if (c >= 0 && std::size_t(c) < m) out.counts[c]++;
    out.n = std::accumulate(out.counts.begin(), out.counts.end(), std::size_t(0));
    out.status.assign(m, 0);
    out.scores.assign(m, 0.0);
    if (out.n == 0) return out;

    auto hit = detail::root_categ_outlier_category(out.counts, params);
    if (hit) {
        double score = double(out.counts[*hit]) / double(out.n);
        out.status[*hit] = 1;
        out.scores[*hit] = score;
        for (std::size_t i = 0; i < codes.size(); i++)
            if (codes[i] >= 0 && std::size_t(codes[i]) == *hit)
                out.flags.push_back({i, score, 0});
        out.pct_common = double(out.n - out.counts[*hit]) / double(out.n);
    }

    auto would_flag_added = [&](std::size_t cat) -> bool {
        std::vector<std::size_t> sim(out.counts.begin(), out.counts.end());
        if (cat == sim.size()) sim.push_back(1);
        else sim[cat]++;
        auto h = detail::root_categ_outlier_category(sim, params);
        return h && *h == cat;
    };
    for (std::size_t c = 0; c < m; c++) {
        if (out.counts[c] > 0) continue;
        if (would_flag_added(c)) {
            out.status[c] = -1;
            out.scores[c] = 1.0 / double(out.n + 1);
        }
    }
    out.new_category_flagged = would_flag_added(m);
    out.new_category_score = out.new_category_flagged ? 1.0 / double(out.n + 1) : 0.0;
    return out;
}

}  // namespace otree
