#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace otree {

/*  Tuning knobs for outlier detection and tree growth. Defaults follow the
 *  GritBot-derived values: z_gap = z_outlier - z_normal, z_tail = 2 * z_normal.
 */
struct Params {
    double p_outliers   = 0.01;   // expected fraction of outliers per distribution
    double z_outlier    = 8.0;    // minimum |z| to flag a numeric value
    double z_normal     = 2.67;   // maximum |z| of a "normal" observation
    double z_gap        = 5.33;   // minimum standardized gap to the nearest non-outlier
    double z_tail       = 5.34;   // |z| past which a distribution side counts as a long tail
    double eps_log      = 1e-3;   // offset guard for log transforms
    double eps_legacy   = 1e-6;   // positivity guard for the legacy log criterion
    double gain_min     = 1e-3;   // minimum normalized gain for a split to qualify
    std::size_t min_size_numeric = 25;   // minimum branch size, numeric targets
    std::size_t min_size_categ   = 50;   // minimum branch size, categorical/ordinal targets
    std::size_t max_depth        = 4;    // maximum number of conditions per branch

    bool transforms       = true;   // apply Alg-2 style transforms (tail flags are always computed)
    bool legacy_transform = false;  // GritBot log criterion instead of the tail-driven one
    bool follow_all       = false;  // recurse into every qualifying split, not just the best

    // Breakpoints for the root-level categorical rule: the least common category
    // may have at most 1 observation below small_n rows, 2 below large_n, else 3.
    std::size_t root_categ_small_n = 10000;
    std::size_t root_categ_large_n = 100000;

    void validate() const {
        auto fail = [](const std::string& msg) { throw std::invalid_argument("params: " + msg); };
        if (!(p_outliers > 0.0 && p_outliers < 0.5)) fail("p_outliers must lie in (0, 0.5)");
        if (!(z_normal > 0.0)) fail("z_normal must be positive");
        if (!(z_outlier > z_normal)) fail("z_outlier must exceed z_normal");
        if (!(z_gap > 0.0)) fail("z_gap must be positive");
        if (!(z_tail > 0.0)) fail("z_tail must be positive");
        if (!(eps_log > 0.0)) fail("eps_log must be positive");
        if (!(eps_legacy > 0.0)) fail("eps_legacy must be positive");
        if (!(gain_min > 0.0 && gain_min < 1.0)) fail("gain_min must lie in (0, 1)");
        if (min_size_numeric < 1) fail("min_size_numeric must be at least 1");
        if (min_size_categ < 1) fail("min_size_categ must be at least 1");
        if (root_categ_small_n > root_categ_large_n) fail("root_categ_small_n must not exceed root_categ_large_n");
    }

    std::size_t min_size(bool numeric_target) const {
        return numeric_target ? min_size_numeric : min_size_categ;
    }
};

}  // namespace otree
