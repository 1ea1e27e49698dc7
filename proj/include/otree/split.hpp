#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "otree/dataset.hpp"
#include "otree/stats.hpp"

namespace otree {

enum class PredicateKind : std::uint8_t {
    LessOrEqual, Greater, Equals, InSubset, NotInSubset, IsMissing, NotMissing
};

/*  One branch predicate over a column. Threshold predicates apply to numeric
 *  values or ordinal level ranks; subset and equality predicates to level
 *  codes. A level code outside the column's known levels matches neither side
 *  of a split.
 */
struct Condition {
    std::size_t col = 0;
    PredicateKind kind = PredicateKind::IsMissing;
    double threshold = 0.0;
    int level = -1;
    std::vector<int> levels;  // sorted ascending

    bool matches(const Column& column, std::size_t row) const {
        const bool missing = column.is_missing(row);
        switch (kind) {
            case PredicateKind::IsMissing:  return missing;
            case PredicateKind::NotMissing: return !missing;
            default: break;
        }
        if (missing) return false;
        switch (kind) {
            case PredicateKind::LessOrEqual: return column.ordered_value(row) <= threshold;
            case PredicateKind::Greater:     return column.ordered_value(row) > threshold;
            case PredicateKind::Equals:      return column.codes[row] == level;
            case PredicateKind::InSubset:
                return std::binary_search(levels.begin(), levels.end(), column.codes[row]);
            case PredicateKind::NotInSubset:
                return std::size_t(column.codes[row]) < column.levels.size() &&
                       !std::binary_search(levels.begin(), levels.end(), column.codes[row]);
            default: return false;
        }
    }

    bool operator==(const Condition& o) const {
        return col == o.col && kind == o.kind && threshold == o.threshold && level == o.level &&
               levels == o.levels;
    }
};

/*  Best split found for one predictor: the left/right partition (threshold or
 *  level subset), the implicit missing branch, and the normalized gain. For
 *  categorical targets, the binarizing category used during the search.
 */
struct SplitResult {
    bool valid = false;
    double gain = -kInf;
    std::size_t col = 0;
    bool subset_split = false;
    double threshold = 0.0;
    std::vector<int> left_levels;
    std::vector<int> right_levels;
    std::size_t n_l = 0, n_r = 0, n_u = 0;
    int binarize_category = -1;
};

// Base info of a class count vector: n*log(n) - sum_k n_k*log(n_k), in nats.
inline double info_value(std::span<const std::size_t> counts) {
    std::size_t n = 0;
    double acc = 0.0;
    for (std::size_t c : counts) {
        n += c;
        if (c > 0) acc += double(c) * std::log(double(c));
    }
    return n > 0 ? double(n) * std::log(double(n)) - acc : 0.0;
}

/*  Indicator recoding of a categorical/ordinal target: equality with category
 *  c, or the cumulative "level <= c" for ordinals. Aligned with `rows`.
 */
inline std::vector<std::uint8_t> binarize_target(const Column& y, std::span<const std::size_t> rows,
                                                 int c) {
    std::vector<std::uint8_t> out(rows.size());
    const bool cumulative = y.kind == ColumnKind::Ordinal;
    for (std::size_t i = 0; i < rows.size(); i++) {
        int code = y.codes[rows[i]];
        out[i] = cumulative ? (code <= c) : (code == c);
    }
    return out;
}

namespace detail {

// Midpoint between consecutive distinct values, clamped so that the induced
// partition stays "x <= threshold" vs "x > threshold".
inline double midpoint(double a, double b) {
    double m = a + (b - a) / 2.0;
    if (!(m >= a) || m >= b) m = a;
    return m;
}

struct BestCut {
    bool valid = false;
    double key = -kInf;         // maximized
    std::size_t pos = 0;        // elements on the left
    std::size_t balance = 0;    // |n_l - n_r|, smaller preferred on ties
    void offer(double k, std::size_t p, std::size_t bal) {
        if (!valid || k > key || (k == key && bal < balance)) {
            valid = true;
            key = k;
            pos = p;
            balance = bal;
        }
    }
};

struct OrderedView {
    std::vector<std::pair<double, std::size_t>> xy;  // (x value, row), sorted
    std::vector<std::size_t> missing_rows;
};

inline OrderedView ordered_view(const Column& x, std::span<const std::size_t> rows) {
    OrderedView v;
    v.xy.reserve(rows.size());
    for (std::size_t r : rows) {
        double xv = x.ordered_value(r);
        if (std::isnan(xv)) v.missing_rows.push_back(r);
        else v.xy.emplace_back(xv, r);
    }
    std::sort(v.xy.begin(), v.xy.end());
    return v;
}

struct SegmentMoments {
    std::vector<long double> sum, ssq;  // prefix sums of values centered at `center`
    double center = 0.0;

    void build(std::span<const double> ys, double c) {
        center = c;
        sum.assign(ys.size() + 1, 0.0L);
        ssq.assign(ys.size() + 1, 0.0L);
        for (std::size_t i = 0; i < ys.size(); i++) {
            long double d = (long double)ys[i] - (long double)c;
            sum[i + 1] = sum[i] + d;
            ssq[i + 1] = ssq[i] + d * d;
        }
    }
    // sample sd of the half-open range [i, j)
    double sd(std::size_t i, std::size_t j) const {
        std::size_t k = j - i;
        if (k < 2) return 0.0;
        long double s = sum[j] - sum[i];
        long double q = ssq[j] - ssq[i];
        long double centered = q - s * s / (long double)k;
        return double(sqrtl(std::max(centered, 0.0L) / (long double)(k - 1)));
    }
};

}  // namespace detail

/*  Threshold split of a numeric target by an ordered predictor (numeric,
 *  ordinal rank, or binary level code). Every midpoint between consecutive
 *  distinct predictor values is evaluated; rows with a missing predictor form
 *  the u branch; gain is the pooled-sd reduction normalized by the node sd.
 *  Thresholds leaving either child under min_size are skipped. Ties prefer the
 *  more size-balanced split, then the smaller threshold.
 */
inline SplitResult best_numeric_split(std::size_t x_col, const Column& x, std::span<const double> y,
                                      std::span<const std::size_t> rows, std::size_t min_size) {
    SplitResult out;
    out.col = x_col;
    const std::size_t n = rows.size();
    if (n < 2) return out;

    std::vector<double> y_all(n);
    for (std::size_t i = 0; i < n; i++) y_all[i] = y[rows[i]];
    auto [mean_all, sd_all] = mean_sd(y_all);
    if (!(sd_all > 0.0)) return out;

    detail::OrderedView view = detail::ordered_view(x, rows);
    const std::size_t nm = view.xy.size();
    if (nm < 2) return out;

    std::vector<double> y_sorted(nm);
    for (std::size_t i = 0; i < nm; i++) y_sorted[i] = y[view.xy[i].second];
    detail::SegmentMoments seg;
    seg.build(y_sorted, mean_all);

    std::vector<double> y_u(view.missing_rows.size());
    for (std::size_t i = 0; i < y_u.size(); i++) y_u[i] = y[view.missing_rows[i]];
    const double sd_u = mean_sd(y_u).second;
    const std::size_t n_u = y_u.size();

    detail::BestCut best;
    for (std::size_t k = 1; k < nm; k++) {
        if (view.xy[k - 1].first == view.xy[k].first) continue;
        if (k < min_size || nm - k < min_size) continue;
        double pooled = (double(k) * seg.sd(0, k) + double(nm - k) * seg.sd(k, nm) +
                         double(n_u) * sd_u) / double(n);
        double gain = (sd_all - pooled) / sd_all;
        best.offer(gain, k, k > nm - k ? k - (nm - k) : nm - k - k);
    }
    if (!best.valid) return out;

    out.valid = true;
    out.gain = best.key;
    out.threshold = detail::midpoint(view.xy[best.pos - 1].first, view.xy[best.pos].first);
    out.n_l = best.pos;
    out.n_r = nm - best.pos;
    out.n_u = n_u;
    return out;
}

/*  Subset split of a numeric target by a categorical predictor: categories
 *  present at the node are ordered by their target mean and every prefix cut
 *  of that order is evaluated. Categories absent from the node are assigned to
 *  neither branch.
 */
inline SplitResult best_categ_split(std::size_t x_col, const Column& x, std::span<const double> y,
                                    std::span<const std::size_t> rows, std::size_t min_size) {
    SplitResult out;
    out.col = x_col;
    out.subset_split = true;
    const std::size_t n = rows.size();
    const std::size_t m = x.levels.size();
    if (n < 2 || m < 2) return out;

    std::vector<double> y_all(n);
    for (std::size_t i = 0; i < n; i++) y_all[i] = y[rows[i]];
    auto [mean_all, sd_all] = mean_sd(y_all);
    if (!(sd_all > 0.0)) return out;

    std::vector<std::size_t> count(m, 0);
    std::vector<long double> sum(m, 0.0L), ssq(m, 0.0L);
    std::size_t n_u = 0;
    long double sum_u = 0.0L, ssq_u = 0.0L;
    for (std::size_t r : rows) {
        int c = std::size_t(r) < x.codes.size() ? x.codes[r] : -1;
        long double d = (long double)y[r] - (long double)mean_all;
        if (c < 0 || std::size_t(c) >= m) {
            n_u++;
            sum_u += d;
            ssq_u += d * d;
        } else {
            count[c]++;
            sum[c] += d;
            ssq[c] += d * d;
        }
    }
    std::vector<std::size_t> present;
    for (std::size_t c = 0; c < m; c++)
        if (count[c] > 0) present.push_back(c);
    if (present.size() < 2) return out;

    std::sort(present.begin(), present.end(), [&](std::size_t a, std::size_t b) {
        long double ma = sum[a] / (long double)count[a];
        long double mb = sum[b] / (long double)count[b];
        return ma < mb || (ma == mb && a < b);
    });

    auto group_sd = [](long double s, long double q, std::size_t k) -> double {
        if (k < 2) return 0.0;
        long double centered = q - s * s / (long double)k;
        return double(sqrtl(std::max(centered, 0.0L) / (long double)(k - 1)));
    };
    const double sd_u = group_sd(sum_u, ssq_u, n_u);

    long double tot_sum = 0.0L, tot_ssq = 0.0L;
    std::size_t tot_cnt = 0;
    for (std::size_t c : present) {
        tot_sum += sum[c];
        tot_ssq += ssq[c];
        tot_cnt += count[c];
    }

    detail::BestCut best;
    long double acc_sum = 0.0L, acc_ssq = 0.0L;
    std::size_t acc_cnt = 0;
    for (std::size_t k = 1; k < present.size(); k++) {
        std::size_t c = present[k - 1];
        acc_sum += sum[c];
        acc_ssq += ssq[c];
        acc_cnt += count[c];
        std::size_t n_l = acc_cnt, n_r = tot_cnt - acc_cnt;
        if (n_l < min_size || n_r < min_size) continue;
        double pooled = (double(n_l) * group_sd(acc_sum, acc_ssq, n_l) +
                         double(n_r) * group_sd(tot_sum - acc_sum, tot_ssq - acc_ssq, n_r) +
                         double(n_u) * sd_u) / double(n);
        double gain = (sd_all - pooled) / sd_all;
        best.offer(gain, k, n_l > n_r ? n_l - n_r : n_r - n_l);
    }
    if (!best.valid) return out;

    out.valid = true;
    out.gain = best.key;
    out.left_levels.assign(present.begin(), present.begin() + best.pos);
    out.right_levels.assign(present.begin() + best.pos, present.end());
    std::sort(out.left_levels.begin(), out.left_levels.end());
    std::sort(out.right_levels.begin(), out.right_levels.end());
    out.n_l = 0;
    for (int c : out.left_levels) out.n_l += count[c];
    out.n_r = tot_cnt - out.n_l;
    out.n_u = n_u;
    return out;
}

namespace detail {

inline double info2(std::size_t zeros, std::size_t ones) {
    const std::size_t counts[2] = {zeros, ones};
    return info_value(counts);
}

inline double info_multiclass(std::span<const std::size_t> counts) { return info_value(counts); }

}  // namespace detail

/*  Split of a binarized categorical/ordinal target: the cut position is chosen
 *  by information gain on the indicator target (threshold scan for ordered
 *  predictors, target-mean-ordered prefix cuts for categorical ones), but the
 *  reported gain is recomputed on the original multiclass target over the
 *  resulting partition, normalized by its base info.
 */
inline SplitResult best_split_binarized(std::size_t x_col, const Column& x,
                                        std::span<const std::uint8_t> y_tilde, const Column& y_orig,
                                        std::span<const std::size_t> rows, std::size_t min_size,
                                        int binarize_category) {
    SplitResult out;
    out.col = x_col;
    out.binarize_category = binarize_category;
    const std::size_t n = rows.size();
    const std::size_t m_y = y_orig.levels.size();
    if (n < 2) return out;

    std::size_t ones_all = 0;
    for (std::uint8_t b : y_tilde) ones_all += b;
    if (ones_all == 0 || ones_all == n) return out;  // constant indicator

    std::vector<std::size_t> class_all(m_y, 0);
    for (std::size_t r : rows) class_all[y_orig.codes[r]]++;
    const double base_orig = detail::info_multiclass(class_all);
    if (!(base_orig > 0.0)) return out;

    const bool ordered = x.splits_as_ordered();
    std::vector<char> in_left(n, 0);  // marks rows of the winning left branch
    detail::BestCut best;

    if (ordered) {
        std::vector<std::pair<double, std::size_t>> xy;  // (x, index into rows)
        xy.reserve(n);
        std::size_t ones_u = 0, n_u = 0;
        for (std::size_t i = 0; i < n; i++) {
            double xv = x.ordered_value(rows[i]);
            if (std::isnan(xv)) {
                n_u++;
                ones_u += y_tilde[i];
            } else {
                xy.emplace_back(xv, i);
            }
        }
        const std::size_t nm = xy.size();
        if (nm < 2) return out;
        std::sort(xy.begin(), xy.end());
        std::vector<std::size_t> ones_prefix(nm + 1, 0);
        for (std::size_t i = 0; i < nm; i++)
            ones_prefix[i + 1] = ones_prefix[i] + y_tilde[xy[i].second];
        const std::size_t ones_nm = ones_prefix[nm];
        const double base_tilde = detail::info2(n - ones_all, ones_all);
        const double info_u = detail::info2(n_u - ones_u, ones_u);
        for (std::size_t k = 1; k < nm; k++) {
            if (xy[k - 1].first == xy[k].first) continue;
            if (k < min_size || nm - k < min_size) continue;
            std::size_t ones_l = ones_prefix[k];
            double pooled = detail::info2(k - ones_l, ones_l) +
                            detail::info2((nm - k) - (ones_nm - ones_l), ones_nm - ones_l) + info_u;
            best.offer((base_tilde - pooled) / base_tilde, k,
                       k > nm - k ? k - (nm - k) : nm - k - k);
        }
        if (!best.valid) return out;
        out.threshold = detail::midpoint(xy[best.pos - 1].first, xy[best.pos].first);
        out.n_l = best.pos;
        out.n_r = nm - best.pos;
        out.n_u = n_u;
        for (std::size_t i = 0; i < best.pos; i++) in_left[xy[i].second] = 1;
    } else {
        const std::size_t m = x.levels.size();
        std::vector<std::size_t> count(m, 0), ones(m, 0);
        std::size_t ones_u = 0, n_u = 0, tot_cnt = 0;
        for (std::size_t i = 0; i < n; i++) {
            int c = x.codes[rows[i]];
            if (c < 0 || std::size_t(c) >= m) {
                n_u++;
                ones_u += y_tilde[i];
            } else {
                count[c]++;
                ones[c] += y_tilde[i];
                tot_cnt++;
            }
        }
        std::vector<std::size_t> present;
        for (std::size_t c = 0; c < m; c++)
            if (count[c] > 0) present.push_back(c);
        if (present.size() < 2) return out;
        std::sort(present.begin(), present.end(), [&](std::size_t a, std::size_t b) {
            double ma = double(ones[a]) / double(count[a]);
            double mb = double(ones[b]) / double(count[b]);
            return ma < mb || (ma == mb && a < b);
        });
        std::size_t ones_nm = 0;
        for (std::size_t c : present) ones_nm += ones[c];
        const double base_tilde = detail::info2(n - ones_all, ones_all);
        const double info_u = detail::info2(n_u - ones_u, ones_u);
        std::size_t acc_cnt = 0, acc_ones = 0;
        detail::BestCut bc;
        for (std::size_t k = 1; k < present.size(); k++) {
            acc_cnt += count[present[k - 1]];
            acc_ones += ones[present[k - 1]];
            std::size_t n_l = acc_cnt, n_r = tot_cnt - acc_cnt;
            if (n_l < min_size || n_r < min_size) continue;
            double pooled = detail::info2(n_l - acc_ones, acc_ones) +
                            detail::info2(n_r - (ones_nm - acc_ones), ones_nm - acc_ones) + info_u;
            bc.offer((base_tilde - pooled) / base_tilde, k,
                     n_l > n_r ? n_l - n_r : n_r - n_l);
        }
        if (!bc.valid) return out;
        best = bc;
        out.subset_split = true;
        out.left_levels.assign(present.begin(), present.begin() + best.pos);
        out.right_levels.assign(present.begin() + best.pos, present.end());
        std::sort(out.left_levels.begin(), out.left_levels.end());
        std::sort(out.right_levels.begin(), out.right_levels.end());
        out.n_u = n_u;
        out.n_l = 0;
        for (std::size_t i = 0; i < n; i++) {
            int c = x.codes[rows[i]];
            if (c >= 0 && std::binary_search(out.left_levels.begin(), out.left_levels.end(), c)) {
                in_left[i] = 1;
                out.n_l++;
            }
        }
        out.n_r = tot_cnt - out.n_l;
    }

    // gain reported on the original multiclass target over the chosen partition
    std::vector<std::size_t> cl(m_y, 0), cr(m_y, 0), cu(m_y, 0);
    for (std::size_t i = 0; i < n; i++) {
        double xv = x.splits_as_ordered() ? x.ordered_value(rows[i]) : 0.0;
        bool missing = out.subset_split ? (x.codes[rows[i]] < 0) : std::isnan(xv);
        if (missing) cu[y_orig.codes[rows[i]]]++;
        else if (in_left[i]) cl[y_orig.codes[rows[i]]]++;
        else cr[y_orig.codes[rows[i]]]++;
    }
    double pooled_orig = detail::info_multiclass(cl) + detail::info_multiclass(cr) +
                         detail::info_multiclass(cu);
    out.valid = true;
    out.gain = (base_orig - pooled_orig) / base_orig;
    return out;
}

/* ------------------------------------------------------------------------- */
/*  Split -> branch conditions                                                */
/* ------------------------------------------------------------------------- */

/*  Conditions entering the left/right branches of a split. Threshold splits on
 *  level codes (binary/ordinal predictors) collapse to equality when a branch
 *  holds a single level; subset splits do the same for singleton subsets.
 */
inline std::pair<Condition, Condition> branch_conditions(const SplitResult& split,
                                                         const Column& x) {
    Condition left, right;
    left.col = right.col = split.col;
    if (split.subset_split) {
        if (split.left_levels.size() == 1) {
            left.kind = PredicateKind::Equals;
            left.level = split.left_levels[0];
        } else {
            left.kind = PredicateKind::InSubset;
            left.levels = split.left_levels;
        }
        if (split.right_levels.size() == 1) {
            right.kind = PredicateKind::Equals;
            right.level = split.right_levels[0];
        } else {
            right.kind = PredicateKind::InSubset;
            right.levels = split.right_levels;
        }
        return {left, right};
    }
    if (!x.is_numeric()) {
        const int m = int(x.levels.size());
        const int lo_max = int(std::floor(split.threshold));
        if (lo_max == 0) {
            left.kind = PredicateKind::Equals;
            left.level = 0;
        } else {
            left.kind = PredicateKind::LessOrEqual;
            left.threshold = split.threshold;
        }
        if (lo_max == m - 2) {
            right.kind = PredicateKind::Equals;
            right.level = m - 1;
        } else {
            right.kind = PredicateKind::Greater;
            right.threshold = split.threshold;
        }
        return {left, right};
    }
    left.kind = PredicateKind::LessOrEqual;
    left.threshold = split.threshold;
    right.kind = PredicateKind::Greater;
    right.threshold = split.threshold;
    return {left, right};
}

inline Condition missing_condition(std::size_t col) {
    Condition c;
    c.col = col;
    c.kind = PredicateKind::IsMissing;
    return c;
}

}  // namespace otree
