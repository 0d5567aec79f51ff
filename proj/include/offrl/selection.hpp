#pragma once

#include "offrl/ope.hpp"

namespace offrl {

struct SelectionReport {
    int winner_index = 0;
    Mat pairwise_losses;            // m x m; entry (i, j) is candidate i's residual against j
    std::vector<int> partitions_used; // per-pair cell counts, row-major upper triangle
    bool clipped = false;            // some candidate had to be clipped into [0, v_max]
};

struct PairResult {
    int chosen = 0;     // 0 for f1, 1 for f2; ties go to f1
    real residual1 = 0.0;
    real residual2 = 0.0;
    int n_cells = 0;
    bool clipped = false;
};

/// Pairwise comparison: both candidates are discretized on the eps grid, the
/// joint partition is built, and each candidate is scored by the empirical
/// projected-Bellman residual || f_bar - Proj_cell(r + gamma f_bar(s',pi)) ||
/// in the data 2-norm. The smaller residual wins.
PairResult bvft_pair(const ValueFunction& f1, const ValueFunction& f2,
                     const TupleDataset& tuples, const StationaryPolicy& pi, real eps,
                     real v_max, const EvalContext& ctx);

/// Tournament over m candidates: the winner minimizes its maximum pairwise
/// residual across all pairs it takes part in.
SelectionReport bvft_tournament(const std::vector<ValueFunction>& candidates,
                                const TupleDataset& tuples, const StationaryPolicy& pi,
                                real eps, real v_max, const EvalContext& ctx);

} // namespace offrl
