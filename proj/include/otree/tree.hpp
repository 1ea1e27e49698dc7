#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <variant>
#include <vector>

#include "otree/dataset.hpp"
#include "otree/params.hpp"
#include "otree/split.hpp"
#include "otree/stats.hpp"

namespace otree {

inline constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

/* ------------------------------------------------------------------------- */
/*  Fitted model structures                                                   */
/* ------------------------------------------------------------------------- */

// Flaggable numeric distribution at one tree node: trimmed moments and z-space
// thresholds in the tree's transform scale, display statistics in original
// units with the node's own outliers excluded.
struct NumericCluster {
    std::size_t n = 0;
    std::size_t n_tail = 0;
    double mu_adj = 0.0;
    double sigma_adj = 0.0;
    double lo_thr = -kInf;
    double hi_thr = kInf;
    DisplayStats display;
};

// Flaggable categorical distribution at one tree node, including the verdicts
// for categories absent from the subsample and for a hypothetical new one.
struct CategCluster {
    std::size_t n = 0;
    std::vector<std::size_t> counts;
    std::vector<std::int8_t> status;  // 1 flagged, -1 would flag if added, 0 normal
    std::vector<double> scores;
    bool new_category_flagged = false;
    double new_category_score = 0.0;
    double pct_common = 1.0;
    bool root_rule = false;
};

using Cluster = std::variant<NumericCluster, CategCluster>;

struct TreeNode {
    std::size_t id = 0;
    std::size_t parent = npos;
    std::size_t depth = 0;
    std::optional<Condition> condition;  // entering condition; none at the root
    std::optional<Cluster> cluster;
    std::vector<std::size_t> children;
};

struct ColumnTree {
    std::size_t target = 0;
    Transform transform;
    bool left_tail = false;
    bool right_tail = false;
    std::vector<TreeNode> nodes;  // nodes[0] is the root
};

struct ColumnSchema {
    std::string name;
    ColumnKind kind = ColumnKind::Numeric;
    std::vector<std::string> levels;
};

struct FlagContext {
    bool numeric = true;
    double pct = 1.0;             // fraction of the subsample on the normal side
    double bound = 0.0;           // comparison point, original units (numeric)
    double mean = 0.0, sd = 0.0;  // display stats (numeric)
    std::vector<std::string> common_levels;  // dominant categories (categorical)
};

struct OutlierFlag {
    std::string row_id;
    std::size_t row = 0;
    std::string column;
    std::size_t col = 0;
    bool numeric = true;
    double num_value = 0.0;     // original units
    std::string value_str;      // level name for categorical values
    double score = 0.0;         // |z| (numeric) or proportion-vs-bound ratio (categorical)
    int direction = 0;          // -1 low, +1 high, 0 categorical
    std::size_t node = 0;
    std::size_t n_conditions = 0;
    std::size_t subsample = 0;
    bool has_missing_condition = false;
    std::vector<Condition> conditions;  // root-to-leaf order
    std::string cond_key;               // canonical path text, used for deterministic ties
    FlagContext context;
};

struct Model {
    int format_version = 1;
    std::string library = "otree 0.1.0";
    std::string fitted_at;  // provenance; empty unless explicitly stamped
    Params params;
    std::vector<ColumnSchema> schema;
    std::vector<CategStats> priors;  // per column; m == 0 for numeric columns
    std::vector<ColumnTree> trees;
    std::vector<OutlierFlag> training_flags;

    std::optional<std::size_t> schema_index(const std::string& name) const {
        for (std::size_t i = 0; i < schema.size(); i++)
            if (schema[i].name == name) return i;
        return std::nullopt;
    }
};

/* ------------------------------------------------------------------------- */
/*  Flag preference (§6 priority order)                                       */
/* ------------------------------------------------------------------------- */

// Canonical text of one condition, used for rendering-independent tie-breaks.
inline std::string condition_key(const Condition& c, const std::vector<ColumnSchema>& schema) {
    char buf[64];
    std::string out = schema[c.col].name;
    switch (c.kind) {
        case PredicateKind::LessOrEqual:
            std::snprintf(buf, sizeof(buf), "<=%.17g", c.threshold);
            out += buf;
            break;
        case PredicateKind::Greater:
            std::snprintf(buf, sizeof(buf), ">%.17g", c.threshold);
            out += buf;
            break;
        case PredicateKind::Equals:
            out += "==" + std::to_string(c.level);
            break;
        case PredicateKind::InSubset:
        case PredicateKind::NotInSubset:
            out += c.kind == PredicateKind::InSubset ? "=in=" : "=out=";
            for (int l : c.levels) out += std::to_string(l) + ",";
            break;
        case PredicateKind::IsMissing:  out += "=na"; break;
        case PredicateKind::NotMissing: out += "=notna"; break;
    }
    return out;
}

inline std::string path_key(const std::vector<Condition>& conds,
                            const std::vector<ColumnSchema>& schema) {
    std::string out;
    for (const Condition& c : conds) {
        out += condition_key(c, schema);
        out.push_back('|');
    }
    return out;
}

/*  Lexicographic preference between two candidate explanations of the same
 *  value: no missing-value condition, then fewer conditions, then a larger
 *  subsample, then a more extreme score. Remaining ties fall back to the
 *  canonical condition-path text (stable under column shuffles) and finally
 *  the node id.
 */
inline bool flag_preferred(const OutlierFlag& a, const OutlierFlag& b) {
    if (a.has_missing_condition != b.has_missing_condition) return !a.has_missing_condition;
    if (a.n_conditions != b.n_conditions) return a.n_conditions < b.n_conditions;
    if (a.subsample != b.subsample) return a.subsample > b.subsample;
    double ea = a.numeric ? a.score : -a.score;  // categorical ratios: smaller is more extreme
    double eb = b.numeric ? b.score : -b.score;
    if (ea != eb) return ea > eb;
    if (a.cond_key != b.cond_key) return a.cond_key < b.cond_key;
    return a.node < b.node;
}

inline const OutlierFlag& select_best_flag(std::span<const OutlierFlag> candidates) {
    const OutlierFlag* best = &candidates.front();
    for (const OutlierFlag& f : candidates.subspan(1))
        if (flag_preferred(f, *best)) best = &f;
    return *best;
}

namespace detail {

// Reduces candidate flags to one survivor per (row, column), ordered by
// (row, column name).
inline std::vector<OutlierFlag> reduce_flags(std::vector<OutlierFlag> candidates) {
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const OutlierFlag& a, const OutlierFlag& b) {
                         if (a.row != b.row) return a.row < b.row;
                         return a.column < b.column;
                     });
    std::vector<OutlierFlag> out;
    std::size_t i = 0;
    while (i < candidates.size()) {
        std::size_t j = i;
        while (j < candidates.size() && candidates[j].row == candidates[i].row &&
               candidates[j].column == candidates[i].column)
            j++;
        out.push_back(select_best_flag(std::span<const OutlierFlag>(candidates).subspan(i, j - i)));
        i = j;
    }
    return out;
}

}  // namespace detail

/* ------------------------------------------------------------------------- */
/*  Fitting                                                                   */
/* ------------------------------------------------------------------------- */

namespace detail {

struct TreeFitOutput {
    ColumnTree tree;
    bool grown = false;
    std::vector<OutlierFlag> flags;
};

class TreeBuilder {
public:
    TreeBuilder(const Dataset& data, const Params& params,
                const std::vector<CategStats>& priors, std::size_t target)
        : data_(data), params_(params), priors_(priors), target_(target),
          ycol_(data.columns[target]), y_numeric_(ycol_.is_numeric()),
          min_size_(params.min_size(y_numeric_)) {}

    TreeFitOutput run() {
        TreeFitOutput out;
        out.tree.target = target_;

        std::vector<std::size_t> rows;
        rows.reserve(data_.n_rows);
        for (std::size_t r = 0; r < data_.n_rows; r++)
            if (!ycol_.is_missing(r)) rows.push_back(r);
        if (rows.size() < 2 * min_size_) return out;

        if (y_numeric_) {
            std::vector<double> sample(rows.size());
            for (std::size_t i = 0; i < rows.size(); i++) sample[i] = ycol_.values[rows[i]];
            TailDecision td = params_.legacy_transform ? check_dist_tails_legacy(sample, params_)
                                                       : check_dist_tails(sample, params_);
            tree_ = &out.tree;
            tree_->transform = td.transform;
            tree_->left_tail = td.left_tail;
            tree_->right_tail = td.right_tail;
            y_work_.assign(data_.n_rows, std::numeric_limits<double>::quiet_NaN());
            for (std::size_t r : rows) y_work_[r] = td.transform.apply(ycol_.values[r]);
        } else {
            tree_ = &out.tree;
        }
        flags_ = &out.flags;

        TreeNode root;
        root.id = 0;
        tree_->nodes.push_back(std::move(root));
        std::vector<std::size_t> kept = attach_cluster(0, rows, /*root=*/true);
        grow(0, kept, 0);
        out.grown = true;
        return out;
    }

private:
    // Builds the node's cluster, records its flags, and returns the subsample
    // with the freshly flagged rows removed (outliers are discarded before the
    // subsample is split further).
    std::vector<std::size_t> attach_cluster(std::size_t node_id,
                                            const std::vector<std::size_t>& rows, bool root) {
        TreeNode& node = tree_->nodes[node_id];
        std::vector<char> drop(rows.size(), 0);
        std::vector<Condition> path = path_of(node_id);

        if (y_numeric_) {
            std::vector<double> work(rows.size()), orig(rows.size());
            for (std::size_t i = 0; i < rows.size(); i++) {
                work[i] = y_work_[rows[i]];
                orig[i] = ycol_.values[rows[i]];
            }
            NumericFlagResult res =
                flag_outliers_numeric(work, orig, params_, tree_->left_tail, tree_->right_tail);
            NumericCluster cl;
            cl.n = res.stats.n;
            cl.n_tail = res.stats.n_tail;
            cl.mu_adj = res.stats.mu_adj;
            cl.sigma_adj = res.stats.sigma_adj;
            cl.lo_thr = res.stats.lo_thr;
            cl.hi_thr = res.stats.hi_thr;
            cl.display = res.stats.display;
            node.cluster = cl;
            for (const SampleFlag& f : res.flags) {
                drop[f.index] = 1;
                flags_->push_back(make_numeric_flag(rows[f.index], f, cl, node_id, path));
            }
        } else {
            CategFlagResult res =
                root ? flag_outliers_categ_root(codes_slice(rows), ycol_.levels.size(), params_)
                     : flag_outliers_categ(codes_slice(rows), priors_[target_], params_);
            CategCluster cl;
            cl.n = res.n;
            cl.counts = res.counts;
            cl.status = res.status;
            cl.scores = res.scores;
            cl.new_category_flagged = res.new_category_flagged;
            cl.new_category_score = res.new_category_score;
            cl.pct_common = res.pct_common;
            cl.root_rule = root;
            node.cluster = cl;
            for (const SampleFlag& f : res.flags) {
                drop[f.index] = 1;
                flags_->push_back(make_categ_flag(rows[f.index], f, cl, node_id, path));
            }
        }

        std::vector<std::size_t> kept;
        kept.reserve(rows.size());
        for (std::size_t i = 0; i < rows.size(); i++)
            if (!drop[i]) kept.push_back(rows[i]);
        return kept;
    }

    void grow(std::size_t node_id, const std::vector<std::size_t>& rows, std::size_t depth) {
        if (depth >= params_.max_depth) return;
        if (rows.size() < 2 * min_size_) return;

        struct Expansion {
            std::size_t child;
            std::vector<std::size_t> kept;
        };
        std::vector<Expansion> best_expansions;
        std::vector<Expansion> follow_expansions;  // used under follow_all
        double best_gain = -kInf;
        std::vector<SplitResult> accepted;  // partition signatures for dedup

        auto consider = [&](const SplitResult& sr) {
            if (!sr.valid || !(sr.gain > params_.gain_min)) return;
            for (const SplitResult& prev : accepted)
                if (prev.col == sr.col && prev.subset_split == sr.subset_split &&
                    prev.threshold == sr.threshold && prev.left_levels == sr.left_levels)
                    return;
            accepted.push_back(sr);

            const Column& xcol = data_.columns[sr.col];
            auto [cond_l, cond_r] = branch_conditions(sr, xcol);
            std::vector<std::size_t> rl, rr, ru;
            partition_rows(sr, xcol, rows, rl, rr, ru);

            std::vector<Expansion> local;
            auto branch = [&](std::vector<std::size_t>& branch_rows, const Condition& cond) {
                if (branch_rows.size() < 2 * min_size_) return;
                std::size_t child = tree_->nodes.size();
                TreeNode nodec;
                nodec.id = child;
                nodec.parent = node_id;
                nodec.depth = depth + 1;
                nodec.condition = cond;
                tree_->nodes.push_back(std::move(nodec));
                tree_->nodes[node_id].children.push_back(child);
                std::vector<std::size_t> kept = attach_cluster(child, branch_rows, false);
                local.push_back({child, std::move(kept)});
            };
            branch(rl, cond_l);
            branch(rr, cond_r);
            branch(ru, missing_condition(sr.col));

            if (params_.follow_all) {
                for (Expansion& e : local) follow_expansions.push_back(std::move(e));
            } else if (sr.gain > best_gain) {
                best_gain = sr.gain;
                best_expansions = std::move(local);
            }
        };

        if (y_numeric_) {
            for (std::size_t p = 0; p < data_.columns.size(); p++) {
                if (p == target_) continue;
                const Column& xcol = data_.columns[p];
                consider(xcol.splits_as_ordered()
                             ? best_numeric_split(p, xcol, y_work_, rows, min_size_)
                             : best_categ_split(p, xcol, y_work_, rows, min_size_));
            }
        } else {
            const std::size_t m_y = ycol_.levels.size();
            const bool ordinal = ycol_.kind == ColumnKind::Ordinal;
            const std::size_t c_end = ordinal && m_y > 1 ? m_y - 1 : m_y;
            for (std::size_t c = 0; c < c_end; c++) {
                std::vector<std::uint8_t> y_tilde = binarize_target(ycol_, rows, int(c));
                std::size_t ones = 0;
                for (std::uint8_t b : y_tilde) ones += b;
                if (ones == 0 || ones == rows.size()) continue;
                for (std::size_t p = 0; p < data_.columns.size(); p++) {
                    if (p == target_) continue;
                    consider(best_split_binarized(p, data_.columns[p], y_tilde, ycol_, rows,
                                                  min_size_, int(c)));
                }
            }
        }

        std::vector<Expansion>& expand = params_.follow_all ? follow_expansions : best_expansions;
        for (Expansion& e : expand) grow(e.child, e.kept, depth + 1);
    }

    static void partition_rows(const SplitResult& sr, const Column& x,
                               const std::vector<std::size_t>& rows,
                               std::vector<std::size_t>& rl, std::vector<std::size_t>& rr,
                               std::vector<std::size_t>& ru) {
        for (std::size_t r : rows) {
            if (x.is_missing(r)) {
                ru.push_back(r);
            } else if (sr.subset_split) {
                if (std::binary_search(sr.left_levels.begin(), sr.left_levels.end(), x.codes[r]))
                    rl.push_back(r);
                else
                    rr.push_back(r);
            } else {
                (x.ordered_value(r) <= sr.threshold ? rl : rr).push_back(r);
            }
        }
    }

    std::vector<int> codes_slice(const std::vector<std::size_t>& rows) const {
        std::vector<int> out(rows.size());
        for (std::size_t i = 0; i < rows.size(); i++) out[i] = ycol_.codes[rows[i]];
        return out;
    }

    std::vector<Condition> path_of(std::size_t node_id) const {
        std::vector<Condition> path;
        for (std::size_t cur = node_id; cur != npos && cur != 0; cur = tree_->nodes[cur].parent)
            if (tree_->nodes[cur].condition) path.push_back(*tree_->nodes[cur].condition);
        std::reverse(path.begin(), path.end());
        return path;
    }

    OutlierFlag flag_shell(std::size_t row, std::size_t node_id,
                           const std::vector<Condition>& path) const {
        OutlierFlag f;
        f.row_id = data_.row_ids[row];
        f.row = row;
        f.column = ycol_.name;
        f.col = target_;
        f.node = node_id;
        f.n_conditions = path.size();
        f.conditions = path;
        for (const Condition& c : path)
            if (c.kind == PredicateKind::IsMissing) f.has_missing_condition = true;
        return f;
    }

    OutlierFlag make_numeric_flag(std::size_t row, const SampleFlag& sf, const NumericCluster& cl,
                                  std::size_t node_id, const std::vector<Condition>& path) const {
        OutlierFlag f = flag_shell(row, node_id, path);
        f.numeric = true;
        f.num_value = ycol_.values[row];
        f.score = sf.score;
        f.direction = sf.direction;
        f.subsample = cl.n;
        f.context.numeric = true;
        f.context.mean = cl.display.mean;
        f.context.sd = cl.display.sd;
        if (sf.direction > 0) {
            f.context.pct = cl.display.pct_below;
            f.context.bound = cl.display.max_nonoutlier;
        } else {
            f.context.pct = cl.display.pct_above;
            f.context.bound = cl.display.min_nonoutlier;
        }
        return f;
    }

    OutlierFlag make_categ_flag(std::size_t row, const SampleFlag& sf, const CategCluster& cl,
                                std::size_t node_id, const std::vector<Condition>& path) const {
        OutlierFlag f = flag_shell(row, node_id, path);
        f.numeric = false;
        f.value_str = ycol_.levels[ycol_.codes[row]];
        f.num_value = double(ycol_.codes[row]);
        f.score = sf.score;
        f.direction = 0;
        f.subsample = cl.n;
        f.context.numeric = false;
        f.context.pct = cl.pct_common;
        f.context.common_levels = common_levels(cl);
        return f;
    }

    std::vector<std::string> common_levels(const CategCluster& cl) const {
        std::vector<std::size_t> idx;
        for (std::size_t c = 0; c < cl.counts.size(); c++)
            if (cl.counts[c] > 0 && cl.status[c] != 1) idx.push_back(c);
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return cl.counts[a] > cl.counts[b] || (cl.counts[a] == cl.counts[b] && a < b);
        });
        std::vector<std::string> names;
        names.reserve(idx.size());
        for (std::size_t c : idx) names.push_back(ycol_.levels[c]);
        return names;
    }

    const Dataset& data_;
    const Params& params_;
    const std::vector<CategStats>& priors_;
    std::size_t target_;
    const Column& ycol_;
    bool y_numeric_;
    std::size_t min_size_;
    ColumnTree* tree_ = nullptr;
    std::vector<OutlierFlag>* flags_ = nullptr;
    std::vector<double> y_work_;
};

}  // namespace detail

struct FitResult {
    Model model;
    std::vector<OutlierFlag> flags;
};

/*  Grows one conditioning tree per column, flagging values that fall outside
 *  robust confidence intervals within every qualifying branch. Target columns
 *  are independent; with threads > 1 they are fit on parallel workers and
 *  merged in schema order, so the result is identical for any thread count.
 */
inline FitResult fit(const Dataset& data, const Params& params, int threads = 1) {
    params.validate();
    if (data.columns.empty()) throw std::invalid_argument("fit: dataset has no columns");

    Model model;
    model.params = params;
    model.schema.reserve(data.columns.size());
    for (const Column& c : data.columns) model.schema.push_back({c.name, c.kind, c.levels});
    model.priors.resize(data.columns.size());
    for (std::size_t c = 0; c < data.columns.size(); c++)
        if (!data.columns[c].is_numeric())
            model.priors[c] = make_categ_priors(data.columns[c].codes,
                                                data.columns[c].levels.size(), params);

    std::vector<detail::TreeFitOutput> outputs(data.columns.size());
    auto work = [&](std::size_t t) {
        outputs[t] = detail::TreeBuilder(data, params, model.priors, t).run();
    };
    const std::size_t n_cols = data.columns.size();
    if (threads <= 1 || n_cols <= 1) {
        for (std::size_t t = 0; t < n_cols; t++) work(t);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        std::size_t n_workers = std::min<std::size_t>(std::size_t(threads), n_cols);
        for (std::size_t w = 0; w < n_workers; w++)
            pool.emplace_back([&]() {
                for (std::size_t t = next.fetch_add(1); t < n_cols; t = next.fetch_add(1)) work(t);
            });
        for (std::thread& th : pool) th.join();
    }

    std::vector<OutlierFlag> candidates;
    for (std::size_t t = 0; t < n_cols; t++) {
        if (!outputs[t].grown) continue;
        model.trees.push_back(std::move(outputs[t].tree));
        for (OutlierFlag& f : outputs[t].flags) {
            f.cond_key = path_key(f.conditions, model.schema);
            candidates.push_back(std::move(f));
        }
    }
    FitResult out;
    out.flags = detail::reduce_flags(std::move(candidates));
    model.training_flags = out.flags;
    out.model = std::move(model);
    return out;
}

/* ------------------------------------------------------------------------- */
/*  Scoring new data                                                          */
/* ------------------------------------------------------------------------- */

namespace detail {

struct ScoreColumn {
    std::size_t data_col = npos;        // column index in the new dataset
    std::vector<int> code_map;          // data code -> model code (-1 unseen)
};

// Condition evaluation against new data, with level codes remapped onto the
// model schema. A level unknown to the model matches neither branch of a
// split, so the row stops descending through it.
inline bool condition_matches(const Condition& cond, const Dataset& data,
                              const std::vector<ScoreColumn>& cols, std::size_t row) {
    const ScoreColumn& sc = cols[cond.col];
    if (sc.data_col == npos)
        return cond.kind == PredicateKind::IsMissing;  // absent column reads as missing
    const Column& col = data.columns[sc.data_col];
    const bool missing = col.is_missing(row);
    switch (cond.kind) {
        case PredicateKind::IsMissing:  return missing;
        case PredicateKind::NotMissing: return !missing;
        default: break;
    }
    if (missing) return false;
    if (col.is_numeric()) {
        switch (cond.kind) {
            case PredicateKind::LessOrEqual: return col.values[row] <= cond.threshold;
            case PredicateKind::Greater:     return col.values[row] > cond.threshold;
            default:                         return false;
        }
    }
    int code = sc.code_map[col.codes[row]];
    if (code < 0) return false;  // unseen level: neither branch is truthful
    switch (cond.kind) {
        case PredicateKind::LessOrEqual: return double(code) <= cond.threshold;
        case PredicateKind::Greater:     return double(code) > cond.threshold;
        case PredicateKind::Equals:      return code == cond.level;
        case PredicateKind::InSubset:
            return std::binary_search(cond.levels.begin(), cond.levels.end(), code);
        case PredicateKind::NotInSubset:
            return !std::binary_search(cond.levels.begin(), cond.levels.end(), code);
        default: return false;
    }
}

}  // namespace detail

struct ScoreOptions {
    bool include_training = false;
};

/*  Routes every row of new data down each fitted tree and checks it against
 *  every cluster along the way; one flag survives per (row, column). Values
 *  identical to a training outlier in the same cluster are suppressed unless
 *  requested, so scoring the training file reports nothing new.
 */
inline std::vector<OutlierFlag> score_rows(const Model& model, const Dataset& data,
                                           const ScoreOptions& opts = {}) {
    std::vector<detail::ScoreColumn> cols(model.schema.size());
    for (std::size_t c = 0; c < model.schema.size(); c++) {
        auto idx = data.col_index(model.schema[c].name);
        if (!idx) continue;  // model column absent from the new data: reads as missing
        const Column& dc = data.columns[*idx];
        if (dc.is_numeric() != (model.schema[c].kind == ColumnKind::Numeric))
            throw std::runtime_error("column '" + model.schema[c].name +
                                     "' kind does not match the fitted schema");
        cols[c].data_col = *idx;
        if (!dc.is_numeric()) {
            cols[c].code_map.assign(dc.levels.size(), -1);
            std::unordered_map<std::string, int> model_code;
            for (std::size_t l = 0; l < model.schema[c].levels.size(); l++)
                model_code[model.schema[c].levels[l]] = int(l);
            for (std::size_t l = 0; l < dc.levels.size(); l++) {
                auto it = model_code.find(dc.levels[l]);
                if (it != model_code.end()) cols[c].code_map[l] = it->second;
            }
        }
    }

    std::vector<OutlierFlag> candidates;
    std::vector<std::size_t> stack;
    for (const ColumnTree& tree : model.trees) {
        const detail::ScoreColumn& tc = cols[tree.target];
        if (tc.data_col == npos) continue;
        const Column& ycol = data.columns[tc.data_col];
        const ColumnSchema& yschema = model.schema[tree.target];
        const bool y_numeric = yschema.kind == ColumnKind::Numeric;

        // paths precomputed per node for flag construction
        std::vector<std::vector<Condition>> paths(tree.nodes.size());
        for (std::size_t n = 1; n < tree.nodes.size(); n++) {
            paths[n] = paths[tree.nodes[n].parent];
            paths[n].push_back(*tree.nodes[n].condition);
        }

        for (std::size_t row = 0; row < data.n_rows; row++) {
            if (ycol.is_missing(row)) continue;
            double w = 0.0;
            int code = -1;
            if (y_numeric) {
                w = tree.transform.apply(ycol.values[row]);
            } else {
                code = tc.code_map[ycol.codes[row]];
            }
            stack.assign(1, 0);
            while (!stack.empty()) {
                std::size_t ni = stack.back();
                stack.pop_back();
                const TreeNode& node = tree.nodes[ni];
                if (node.cluster) {
                    OutlierFlag f;
                    bool hit = false;
                    if (y_numeric) {
                        const NumericCluster& cl = std::get<NumericCluster>(*node.cluster);
                        double z = (w - cl.mu_adj) / cl.sigma_adj;
                        // an infinite threshold disables the side entirely
                        if ((z >= cl.hi_thr && cl.hi_thr < kInf) ||
                            (z <= cl.lo_thr && cl.lo_thr > -kInf)) {
                            hit = true;
                            f.numeric = true;
                            f.direction = z > 0 ? +1 : -1;
                            f.score = std::fabs(z);
                            f.num_value = ycol.values[row];
                            f.subsample = cl.n;
                            f.context.numeric = true;
                            f.context.mean = cl.display.mean;
                            f.context.sd = cl.display.sd;
                            f.context.pct = f.direction > 0 ? cl.display.pct_below
                                                            : cl.display.pct_above;
                            f.context.bound = f.direction > 0 ? cl.display.max_nonoutlier
                                                              : cl.display.min_nonoutlier;
                        }
                    } else {
                        const CategCluster& cl = std::get<CategCluster>(*node.cluster);
                        double score = 0.0;
                        if (code >= 0 && cl.status[code] != 0) {
                            hit = true;
                            score = cl.scores[code];
                        } else if (code < 0 && cl.new_category_flagged) {
                            hit = true;
                            score = cl.new_category_score;
                        }
                        if (hit) {
                            f.numeric = false;
                            f.direction = 0;
                            f.score = score;
                            f.num_value = double(code);
                            f.value_str = ycol.levels[ycol.codes[row]];
                            f.subsample = cl.n;
                            f.context.numeric = false;
                            f.context.pct = cl.pct_common;
                            std::vector<std::size_t> idx;
                            for (std::size_t c = 0; c < cl.counts.size(); c++)
                                if (cl.counts[c] > 0 && cl.status[c] != 1) idx.push_back(c);
                            std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
                                return cl.counts[a] > cl.counts[b] ||
                                       (cl.counts[a] == cl.counts[b] && a < b);
                            });
                            for (std::size_t c : idx)
                                f.context.common_levels.push_back(yschema.levels[c]);
                        }
                    }
                    if (hit) {
                        f.row = row;
                        f.row_id = data.row_ids[row];
                        f.column = yschema.name;
                        f.col = tree.target;
                        f.node = node.id;
                        f.n_conditions = paths[ni].size();
                        f.conditions = paths[ni];
                        for (const Condition& c : f.conditions)
                            if (c.kind == PredicateKind::IsMissing) f.has_missing_condition = true;
                        f.cond_key = path_key(f.conditions, model.schema);
                        candidates.push_back(std::move(f));
                    }
                }
                // push children in reverse so traversal visits them in id order
                for (std::size_t k = node.children.size(); k-- > 0;) {
                    std::size_t child = node.children[k];
                    if (detail::condition_matches(*tree.nodes[child].condition, data, cols, row))
                        stack.push_back(child);
                }
            }
        }
    }

    std::vector<OutlierFlag> flags = detail::reduce_flags(std::move(candidates));
    if (!opts.include_training) {
        auto is_training = [&](const OutlierFlag& f) {
            for (const OutlierFlag& t : model.training_flags) {
                if (t.col != f.col || t.node != f.node) continue;
                if (f.numeric ? (t.num_value == f.num_value) : (t.value_str == f.value_str))
                    return true;
            }
            return false;
        };
        flags.erase(std::remove_if(flags.begin(), flags.end(), is_training), flags.end());
    }
    return flags;
}

}  // namespace otree
