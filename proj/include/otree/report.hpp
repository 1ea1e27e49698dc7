#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "otree/tree.hpp"

namespace otree {

namespace detail {

inline std::string fixed3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

inline std::string level_list(const std::vector<std::string>& names) {
    std::string out;
    for (std::size_t i = 0; i < names.size(); i++) {
        if (i) out += ", ";
        out += names[i];
    }
    return out;
}

}  // namespace detail

/*  Human-readable text of one condition, e.g. `[Pclass] = [3]` or
 *  `[Fare] <= [29.125]`. Ordinal thresholds print the highest level name of
 *  the left branch.
 */
inline std::string render_condition(const Condition& c, const std::vector<ColumnSchema>& schema) {
    const ColumnSchema& col = schema[c.col];
    const std::string name = "[" + col.name + "]";
    auto level_name = [&](int l) { return "[" + col.levels[l] + "]"; };
    switch (c.kind) {
        case PredicateKind::LessOrEqual:
            if (col.kind != ColumnKind::Numeric)
                return name + " <= " + level_name(int(std::floor(c.threshold)));
            return name + " <= [" + detail::fixed3(c.threshold) + "]";
        case PredicateKind::Greater:
            if (col.kind != ColumnKind::Numeric)
                return name + " > " + level_name(int(std::floor(c.threshold)));
            return name + " > [" + detail::fixed3(c.threshold) + "]";
        case PredicateKind::Equals:
            return name + " = " + level_name(c.level);
        case PredicateKind::InSubset:
        case PredicateKind::NotInSubset: {
            std::vector<std::string> names;
            names.reserve(c.levels.size());
            for (int l : c.levels) names.push_back(col.levels[l]);
            const char* op = c.kind == PredicateKind::InSubset ? " in [" : " not in [";
            return name + op + detail::level_list(names) + "]";
        }
        case PredicateKind::IsMissing:
            return name + " is missing";
        case PredicateKind::NotMissing:
            return name + " is not missing";
    }
    return name;
}

/*  Renders flags into the per-row explanation blocks, one block per flag,
 *  ordered by (row, column name):
 *
 *      row [2230] - suspicious column: [T3] - suspicious value: [10.600]
 *        distribution: 99.951% <= [7.600]
 *        given:
 *          [query.hyperthyroid] = [FALSE]
 *
 *  Values and percentages use three decimals; all numbers are in original,
 *  untransformed units.
 */
inline std::string render(const std::vector<OutlierFlag>& flags,
                          const std::vector<ColumnSchema>& schema) {
    if (flags.empty()) return "No outliers found.\n";
    std::string out;
    bool first = true;
    for (const OutlierFlag& f : flags) {
        if (!first) out += "\n";
        first = false;
        const std::string value = f.numeric ? detail::fixed3(f.num_value) : f.value_str;
        out += "row [" + f.row_id + "] - suspicious column: [" + f.column +
               "] - suspicious value: [" + value + "]\n";
        if (f.context.numeric) {
            const char* cmp = f.direction > 0 ? "<=" : ">=";
            out += "  distribution: " + detail::fixed3(100.0 * f.context.pct) + "% " + cmp + " [" +
                   detail::fixed3(f.context.bound) + "]\n";
        } else if (f.context.common_levels.size() == 1) {
            out += "  distribution: " + detail::fixed3(100.0 * f.context.pct) + "% = [" +
                   f.context.common_levels[0] + "]\n";
        } else {
            out += "  distribution: " + detail::fixed3(100.0 * f.context.pct) + "% in [" +
                   detail::level_list(f.context.common_levels) + "]\n";
        }
        if (!f.conditions.empty()) {
            out += "  given:\n";
            for (const Condition& c : f.conditions)
                out += "    " + render_condition(c, schema) + "\n";
        }
    }
    return out;
}

/*  Structured report mirroring every flag field, for machine consumption.  */
inline std::string render_json(const std::vector<OutlierFlag>& flags,
                               const std::vector<ColumnSchema>& schema) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const OutlierFlag& f : flags) {
        nlohmann::ordered_json j;
        j["row_id"] = f.row_id;
        j["row_index"] = f.row;
        j["column"] = f.column;
        if (f.numeric) j["value"] = f.num_value;
        else j["value"] = f.value_str;
        j["score"] = std::isfinite(f.score) ? nlohmann::ordered_json(f.score)
                                            : nlohmann::ordered_json(nullptr);
        j["direction"] = f.direction > 0 ? "high" : (f.direction < 0 ? "low" : "categorical");
        j["n_conditions"] = f.n_conditions;
        j["subsample"] = f.subsample;
        j["has_missing_condition"] = f.has_missing_condition;
        j["node"] = f.node;
        nlohmann::ordered_json conds = nlohmann::ordered_json::array();
        for (const Condition& c : f.conditions) conds.push_back(render_condition(c, schema));
        j["conditions"] = std::move(conds);
        nlohmann::ordered_json ctx;
        if (f.context.numeric) {
            ctx["pct"] = f.context.pct;
            ctx["bound"] = f.context.bound;
            ctx["mean"] = f.context.mean;
            ctx["sd"] = f.context.sd;
        } else {
            ctx["pct_common"] = f.context.pct;
            ctx["common_levels"] = f.context.common_levels;
        }
        j["distribution"] = std::move(ctx);
        arr.push_back(std::move(j));
    }
    return arr.dump(1, '\t') + "\n";
}

}  // namespace otree
