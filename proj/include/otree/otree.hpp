#pragma once

// Explainable outlier detection through decision-tree conditioning: grows one
// supervised conditioning tree per column and flags values falling outside
// robust confidence intervals within each branch, reporting human-readable
// conditions and distribution context.

#include "otree/dataset.hpp"
#include "otree/model_json.hpp"
#include "otree/params.hpp"
#include "otree/report.hpp"
#include "otree/split.hpp"
#include "otree/stats.hpp"
#include "otree/tree.hpp"
