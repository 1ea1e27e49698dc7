#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "otree/tree.hpp"

namespace otree {

namespace detail {

using json = nlohmann::ordered_json;

// Infinities mark disabled flagging sides; JSON stores them as null.
inline json num_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}
inline double null_or_num(const json& j, double inf_value) {
    return j.is_null() ? inf_value : j.get<double>();
}

inline const json& member(const json& j, const char* key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end())
        throw std::runtime_error("model file: missing field '" + std::string(key) + "' in " + where);
    return *it;
}

inline const char* predicate_name(PredicateKind k) {
    switch (k) {
        case PredicateKind::LessOrEqual: return "le";
        case PredicateKind::Greater:     return "gt";
        case PredicateKind::Equals:      return "eq";
        case PredicateKind::InSubset:    return "in";
        case PredicateKind::NotInSubset: return "not_in";
        case PredicateKind::IsMissing:   return "is_missing";
        case PredicateKind::NotMissing:  return "not_missing";
    }
    return "?";
}

inline PredicateKind predicate_from(const std::string& s, const std::string& where) {
    if (s == "le") return PredicateKind::LessOrEqual;
    if (s == "gt") return PredicateKind::Greater;
    if (s == "eq") return PredicateKind::Equals;
    if (s == "in") return PredicateKind::InSubset;
    if (s == "not_in") return PredicateKind::NotInSubset;
    if (s == "is_missing") return PredicateKind::IsMissing;
    if (s == "not_missing") return PredicateKind::NotMissing;
    throw std::runtime_error("model file: unknown predicate '" + s + "' in " + where);
}

inline json condition_to_json(const Condition& c) {
    json j;
    j["column"] = c.col;
    j["predicate"] = predicate_name(c.kind);
    switch (c.kind) {
        case PredicateKind::LessOrEqual:
        case PredicateKind::Greater:
            j["threshold"] = c.threshold;
            break;
        case PredicateKind::Equals:
            j["level"] = c.level;
            break;
        case PredicateKind::InSubset:
        case PredicateKind::NotInSubset:
            j["levels"] = c.levels;
            break;
        default:
            break;
    }
    return j;
}

inline Condition condition_from_json(const json& j, std::size_t n_cols, const std::string& where) {
    Condition c;
    c.col = member(j, "column", where).get<std::size_t>();
    if (c.col >= n_cols)
        throw std::runtime_error("model file: column index out of range in " + where);
    c.kind = predicate_from(member(j, "predicate", where).get<std::string>(), where);
    switch (c.kind) {
        case PredicateKind::LessOrEqual:
        case PredicateKind::Greater:
            c.threshold = member(j, "threshold", where).get<double>();
            break;
        case PredicateKind::Equals:
            c.level = member(j, "level", where).get<int>();
            break;
        case PredicateKind::InSubset:
        case PredicateKind::NotInSubset:
            c.levels = member(j, "levels", where).get<std::vector<int>>();
            break;
        default:
            break;
    }
    return c;
}

inline json cluster_to_json(const Cluster& cl) {
    json j;
    if (std::holds_alternative<NumericCluster>(cl)) {
        const NumericCluster& c = std::get<NumericCluster>(cl);
        j["type"] = "numeric";
        j["n"] = c.n;
        j["n_tail"] = c.n_tail;
        j["mu_adj"] = c.mu_adj;
        j["sigma_adj"] = c.sigma_adj;
        j["lo_thr"] = num_or_null(c.lo_thr);
        j["hi_thr"] = num_or_null(c.hi_thr);
        j["display"] = {{"mean", c.display.mean},
                        {"sd", c.display.sd},
                        {"min_nonoutlier", c.display.min_nonoutlier},
                        {"max_nonoutlier", c.display.max_nonoutlier},
                        {"pct_below", c.display.pct_below},
                        {"pct_above", c.display.pct_above}};
    } else {
        const CategCluster& c = std::get<CategCluster>(cl);
        j["type"] = "categorical";
        j["n"] = c.n;
        j["counts"] = c.counts;
        j["status"] = c.status;
        j["scores"] = c.scores;
        j["new_category_flagged"] = c.new_category_flagged;
        j["new_category_score"] = c.new_category_score;
        j["pct_common"] = c.pct_common;
        j["root_rule"] = c.root_rule;
    }
    return j;
}

inline Cluster cluster_from_json(const json& j, const std::string& where) {
    const std::string type = member(j, "type", where).get<std::string>();
    if (type == "numeric") {
        NumericCluster c;
        c.n = member(j, "n", where).get<std::size_t>();
        c.n_tail = member(j, "n_tail", where).get<std::size_t>();
        c.mu_adj = member(j, "mu_adj", where).get<double>();
        c.sigma_adj = member(j, "sigma_adj", where).get<double>();
        c.lo_thr = null_or_num(member(j, "lo_thr", where), -kInf);
        c.hi_thr = null_or_num(member(j, "hi_thr", where), kInf);
        const json& d = member(j, "display", where);
        c.display.mean = member(d, "mean", where).get<double>();
        c.display.sd = member(d, "sd", where).get<double>();
        c.display.min_nonoutlier = member(d, "min_nonoutlier", where).get<double>();
        c.display.max_nonoutlier = member(d, "max_nonoutlier", where).get<double>();
        c.display.pct_below = member(d, "pct_below", where).get<double>();
        c.display.pct_above = member(d, "pct_above", where).get<double>();
        return c;
    }
    if (type != "categorical")
        throw std::runtime_error("model file: unknown cluster type '" + type + "' in " + where);
    CategCluster c;
    c.n = member(j, "n", where).get<std::size_t>();
    c.counts = member(j, "counts", where).get<std::vector<std::size_t>>();
    c.status = member(j, "status", where).get<std::vector<std::int8_t>>();
    c.scores = member(j, "scores", where).get<std::vector<double>>();
    if (c.status.size() != c.counts.size() || c.scores.size() != c.counts.size())
        throw std::runtime_error("model file: inconsistent cluster arrays in " + where);
    c.new_category_flagged = member(j, "new_category_flagged", where).get<bool>();
    c.new_category_score = member(j, "new_category_score", where).get<double>();
    c.pct_common = member(j, "pct_common", where).get<double>();
    c.root_rule = member(j, "root_rule", where).get<bool>();
    return c;
}

inline json params_to_json(const Params& p) {
    json j;
    j["p_outliers"] = p.p_outliers;
    j["z_outlier"] = p.z_outlier;
    j["z_normal"] = p.z_normal;
    j["z_gap"] = p.z_gap;
    j["z_tail"] = p.z_tail;
    j["eps_log"] = p.eps_log;
    j["eps_legacy"] = p.eps_legacy;
    j["gain_min"] = p.gain_min;
    j["min_size_numeric"] = p.min_size_numeric;
    j["min_size_categ"] = p.min_size_categ;
    j["max_depth"] = p.max_depth;
    j["transforms"] = p.transforms;
    j["legacy_transform"] = p.legacy_transform;
    j["follow_all"] = p.follow_all;
    j["root_categ_small_n"] = p.root_categ_small_n;
    j["root_categ_large_n"] = p.root_categ_large_n;
    return j;
}

inline Params params_from_json(const json& j) {
    Params p;
    const std::string where = "params";
    p.p_outliers = member(j, "p_outliers", where).get<double>();
    p.z_outlier = member(j, "z_outlier", where).get<double>();
    p.z_normal = member(j, "z_normal", where).get<double>();
    p.z_gap = member(j, "z_gap", where).get<double>();
    p.z_tail = member(j, "z_tail", where).get<double>();
    p.eps_log = member(j, "eps_log", where).get<double>();
    p.eps_legacy = member(j, "eps_legacy", where).get<double>();
    p.gain_min = member(j, "gain_min", where).get<double>();
    p.min_size_numeric = member(j, "min_size_numeric", where).get<std::size_t>();
    p.min_size_categ = member(j, "min_size_categ", where).get<std::size_t>();
    p.max_depth = member(j, "max_depth", where).get<std::size_t>();
    p.transforms = member(j, "transforms", where).get<bool>();
    p.legacy_transform = member(j, "legacy_transform", where).get<bool>();
    p.follow_all = member(j, "follow_all", where).get<bool>();
    p.root_categ_small_n = member(j, "root_categ_small_n", where).get<std::size_t>();
    p.root_categ_large_n = member(j, "root_categ_large_n", where).get<std::size_t>();
    return p;
}

inline json flag_to_json(const OutlierFlag& f) {
    json j;
    j["row_id"] = f.row_id;
    j["row"] = f.row;
    j["column"] = f.column;
    j["col"] = f.col;
    j["numeric"] = f.numeric;
    if (f.numeric) j["value"] = f.num_value;
    else j["value"] = f.value_str;
    j["score"] = num_or_null(f.score);
    j["direction"] = f.direction;
    j["node"] = f.node;
    j["n_conditions"] = f.n_conditions;
    j["subsample"] = f.subsample;
    j["has_missing_condition"] = f.has_missing_condition;
    json conds = json::array();
    for (const Condition& c : f.conditions) conds.push_back(condition_to_json(c));
    j["conditions"] = std::move(conds);
    json ctx;
    ctx["pct"] = f.context.pct;
    if (f.context.numeric) {
        ctx["bound"] = f.context.bound;
        ctx["mean"] = f.context.mean;
        ctx["sd"] = f.context.sd;
    } else {
        ctx["common_levels"] = f.context.common_levels;
    }
    j["context"] = std::move(ctx);
    return j;
}

inline OutlierFlag flag_from_json(const json& j, std::size_t n_cols, const std::string& where) {
    OutlierFlag f;
    f.row_id = member(j, "row_id", where).get<std::string>();
    f.row = member(j, "row", where).get<std::size_t>();
    f.column = member(j, "column", where).get<std::string>();
    f.col = member(j, "col", where).get<std::size_t>();
    if (f.col >= n_cols) throw std::runtime_error("model file: column index out of range in " + where);
    f.numeric = member(j, "numeric", where).get<bool>();
    const json& v = member(j, "value", where);
    if (f.numeric) f.num_value = v.get<double>();
    else f.value_str = v.get<std::string>();
    f.score = null_or_num(member(j, "score", where), kInf);
    f.direction = member(j, "direction", where).get<int>();
    f.node = member(j, "node", where).get<std::size_t>();
    f.n_conditions = member(j, "n_conditions", where).get<std::size_t>();
    f.subsample = member(j, "subsample", where).get<std::size_t>();
    f.has_missing_condition = member(j, "has_missing_condition", where).get<bool>();
    for (const json& cj : member(j, "conditions", where))
        f.conditions.push_back(condition_from_json(cj, n_cols, where));
    const json& ctx = member(j, "context", where);
    f.context.numeric = f.numeric;
    f.context.pct = member(ctx, "pct", where).get<double>();
    if (f.numeric) {
        f.context.bound = member(ctx, "bound", where).get<double>();
        f.context.mean = member(ctx, "mean", where).get<double>();
        f.context.sd = member(ctx, "sd", where).get<double>();
    } else {
        f.context.common_levels = member(ctx, "common_levels", where).get<std::vector<std::string>>();
    }
    return f;
}

}  // namespace detail

/*  Lossless, versioned model file: structured JSON with shortest round-trip
 *  number formatting, human-inspectable with the schema's level lists.
 */
inline std::string serialize(const Model& model) {
    using detail::json;
    json j;
    j["version"] = model.format_version;
    j["provenance"] = {{"library", model.library}, {"fitted", model.fitted_at}};
    j["params"] = detail::params_to_json(model.params);
    json cols = json::array();
    for (const ColumnSchema& c : model.schema) {
        json cj;
        cj["name"] = c.name;
        cj["kind"] = to_string(c.kind);
        if (c.kind != ColumnKind::Numeric) cj["levels"] = c.levels;
        cols.push_back(std::move(cj));
    }
    j["schema"] = {{"columns", std::move(cols)}};

    json priors = json::array();
    for (std::size_t c = 0; c < model.priors.size(); c++) {
        if (model.priors[c].m == 0) continue;
        json pj;
        pj["column"] = model.schema[c].name;
        pj["n"] = model.priors[c].n_prior;
        pj["counts"] = model.priors[c].counts;
        priors.push_back(std::move(pj));
    }
    j["priors"] = std::move(priors);

    json trees = json::array();
    for (const ColumnTree& t : model.trees) {
        json tj;
        tj["column"] = model.schema[t.target].name;
        json tr;
        switch (t.transform.kind) {
            case TransformKind::None: tr["kind"] = "none"; break;
            case TransformKind::Log:
                tr["kind"] = "log";
                tr["offset"] = t.transform.log_offset;
                break;
            case TransformKind::Exp:
                tr["kind"] = "exp";
                tr["mu"] = t.transform.exp_mu;
                tr["sigma"] = t.transform.exp_sigma;
                break;
        }
        tj["transform"] = std::move(tr);
        tj["left_tail"] = t.left_tail;
        tj["right_tail"] = t.right_tail;
        json nodes = json::array();
        for (const TreeNode& n : t.nodes) {
            json nj;
            nj["id"] = n.id;
            nj["parent"] = n.parent == npos ? detail::json(nullptr) : detail::json(n.parent);
            nj["condition"] = n.condition ? detail::condition_to_json(*n.condition)
                                          : detail::json(nullptr);
            nj["cluster"] = n.cluster ? detail::cluster_to_json(*n.cluster) : detail::json(nullptr);
            nodes.push_back(std::move(nj));
        }
        tj["nodes"] = std::move(nodes);
        trees.push_back(std::move(tj));
    }
    j["trees"] = std::move(trees);

    json tf = detail::json::array();
    for (const OutlierFlag& f : model.training_flags) tf.push_back(detail::flag_to_json(f));
    j["training_flags"] = std::move(tf);
    return j.dump(1, '\t') + "\n";
}

inline Model deserialize(const std::string& text) {
    using detail::json;
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& ex) {
        throw std::runtime_error(std::string("model file: invalid JSON: ") + ex.what());
    }
    Model model;
    model.format_version = detail::member(j, "version", "top level").get<int>();
    if (model.format_version != 1)
        throw std::runtime_error("model file: unsupported version " +
                                 std::to_string(model.format_version));
    const json& prov = detail::member(j, "provenance", "top level");
    model.library = detail::member(prov, "library", "provenance").get<std::string>();
    model.fitted_at = detail::member(prov, "fitted", "provenance").get<std::string>();
    model.params = detail::params_from_json(detail::member(j, "params", "top level"));
    model.params.validate();

    const json& cols = detail::member(detail::member(j, "schema", "top level"), "columns", "schema");
    for (std::size_t i = 0; i < cols.size(); i++) {
        const json& cj = cols[i];
        const std::string where = "schema.columns[" + std::to_string(i) + "]";
        ColumnSchema c;
        c.name = detail::member(cj, "name", where).get<std::string>();
        const std::string kind = detail::member(cj, "kind", where).get<std::string>();
        if (kind == "numeric") c.kind = ColumnKind::Numeric;
        else if (kind == "categorical") c.kind = ColumnKind::Categorical;
        else if (kind == "ordinal") c.kind = ColumnKind::Ordinal;
        else throw std::runtime_error("model file: unknown column kind '" + kind + "' in " + where);
        if (c.kind != ColumnKind::Numeric)
            c.levels = detail::member(cj, "levels", where).get<std::vector<std::string>>();
        model.schema.push_back(std::move(c));
    }
    const std::size_t n_cols = model.schema.size();

    model.priors.resize(n_cols);
    for (const json& pj : detail::member(j, "priors", "top level")) {
        const std::string name = detail::member(pj, "column", "priors").get<std::string>();
        auto idx = model.schema_index(name);
        if (!idx) throw std::runtime_error("model file: priors reference unknown column '" + name + "'");
        std::vector<std::size_t> counts =
            detail::member(pj, "counts", "priors").get<std::vector<std::size_t>>();
        if (counts.size() != model.schema[*idx].levels.size())
            throw std::runtime_error("model file: priors count length mismatch for column '" + name + "'");
        std::vector<int> codes;
        codes.reserve(detail::member(pj, "n", "priors").get<std::size_t>());
        for (std::size_t c = 0; c < counts.size(); c++)
            codes.insert(codes.end(), counts[c], int(c));
        model.priors[*idx] = make_categ_priors(codes, counts.size(), model.params);
    }

    for (const json& tj : detail::member(j, "trees", "top level")) {
        const std::string name = detail::member(tj, "column", "trees").get<std::string>();
        auto idx = model.schema_index(name);
        if (!idx) throw std::runtime_error("model file: tree references unknown column '" + name + "'");
        ColumnTree t;
        t.target = *idx;
        const json& tr = detail::member(tj, "transform", "trees[" + name + "]");
        const std::string tk = detail::member(tr, "kind", "transform").get<std::string>();
        if (tk == "none") {
            t.transform.kind = TransformKind::None;
        } else if (tk == "log") {
            t.transform.kind = TransformKind::Log;
            t.transform.log_offset = detail::member(tr, "offset", "transform").get<double>();
        } else if (tk == "exp") {
            t.transform.kind = TransformKind::Exp;
            t.transform.exp_mu = detail::member(tr, "mu", "transform").get<double>();
            t.transform.exp_sigma = detail::member(tr, "sigma", "transform").get<double>();
        } else {
            throw std::runtime_error("model file: unknown transform '" + tk + "'");
        }
        t.left_tail = detail::member(tj, "left_tail", "trees").get<bool>();
        t.right_tail = detail::member(tj, "right_tail", "trees").get<bool>();

        const json& nodes = detail::member(tj, "nodes", "trees[" + name + "]");
        for (std::size_t i = 0; i < nodes.size(); i++) {
            const std::string where = "trees[" + name + "].nodes[" + std::to_string(i) + "]";
            const json& nj = nodes[i];
            TreeNode n;
            n.id = detail::member(nj, "id", where).get<std::size_t>();
            if (n.id != i)
                throw std::runtime_error("model file: node ids must be dense and ordered in " + where);
            const json& pj = detail::member(nj, "parent", where);
            n.parent = pj.is_null() ? npos : pj.get<std::size_t>();
            if (n.parent != npos && n.parent >= i)
                throw std::runtime_error("model file: node parent must precede the node in " + where);
            const json& cj = detail::member(nj, "condition", where);
            if (!cj.is_null()) n.condition = detail::condition_from_json(cj, n_cols, where);
            if ((n.parent == npos) != !n.condition)
                throw std::runtime_error("model file: only the root may lack a condition in " + where);
            const json& clj = detail::member(nj, "cluster", where);
            if (!clj.is_null()) {
                n.cluster = detail::cluster_from_json(clj, where);
                const bool is_num = std::holds_alternative<NumericCluster>(*n.cluster);
                if (is_num != (model.schema[t.target].kind == ColumnKind::Numeric))
                    throw std::runtime_error("model file: cluster type does not match column kind in " +
                                             where);
            }
            const std::size_t parent = n.parent;
            n.depth = parent == npos ? 0 : t.nodes[parent].depth + 1;
            t.nodes.push_back(std::move(n));
            if (parent != npos) t.nodes[parent].children.push_back(i);
        }
        model.trees.push_back(std::move(t));
    }

    const json& tf = detail::member(j, "training_flags", "top level");
    for (std::size_t i = 0; i < tf.size(); i++)
        model.training_flags.push_back(
            detail::flag_from_json(tf[i], n_cols, "training_flags[" + std::to_string(i) + "]"));
    for (OutlierFlag& f : model.training_flags)
        f.cond_key = path_key(f.conditions, model.schema);
    return model;
}

}  // namespace otree
