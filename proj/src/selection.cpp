#include "offrl/selection.hpp"

#include <cmath>

namespace offrl {

namespace {

ValueFunction clip_candidate(const ValueFunction& f, real v_max, bool* clipped) {
    ValueFunction out = f;
    for (int s = 0; s < out.values.rows(); ++s)
        for (int a = 0; a < out.values.cols(); ++a) {
            real v = out.values(s, a);
            real c = std::clamp(v, 0.0, v_max);
            if (c != v) *clipped = true;
            out.values(s, a) = c;
        }
    return out;
}

ValueFunction discretize(const ValueFunction& f, real eps, real v_max) {
    const int levels = static_cast<int>(std::ceil(v_max / eps)) + 1;
    ValueFunction out = f;
    for (int s = 0; s < out.values.rows(); ++s)
        for (int a = 0; a < out.values.cols(); ++a) {
            int g = std::min(static_cast<int>(std::floor(out.values(s, a) / eps)), levels - 1);
            out.values(s, a) = (static_cast<real>(g) + 0.5) * eps; // cell midpoint
        }
    return out;
}

/// Empirical projected-Bellman residual of a discretized candidate on the
/// partition: per-cell regression of r + gamma f(s',pi), then the data-norm
/// distance between the candidate and its projected backup.
real projected_residual(const ValueFunction& fbar, const Partition& partition,
                        const TupleDataset& tuples, const StationaryPolicy& pi,
                        const EvalContext& ctx) {
    Vec fpi = fbar.against_policy(pi);
    Vec sums = Vec::Zero(partition.n_cells);
    Vec counts = Vec::Zero(partition.n_cells);
    for (const Step& st : tuples.tuples) {
        int cell = partition.cell_of[st.state * ctx.n_actions + st.action];
        sums[cell] += st.reward + ctx.gamma * fpi[st.next_state];
        counts[cell] += 1.0;
    }
    real total = 0.0;
    for (const Step& st : tuples.tuples) {
        int cell = partition.cell_of[st.state * ctx.n_actions + st.action];
        real backup = counts[cell] > 0.0 ? sums[cell] / counts[cell] : 0.0;
        real d = fbar.values(st.state, st.action) - backup;
        total += d * d;
    }
    return std::sqrt(total / static_cast<real>(tuples.size()));
}

} // namespace

PairResult bvft_pair(const ValueFunction& f1, const ValueFunction& f2,
                     const TupleDataset& tuples, const StationaryPolicy& pi, real eps,
                     real v_max, const EvalContext& ctx) {
    PairResult out;
    ValueFunction c1 = clip_candidate(f1, v_max, &out.clipped);
    ValueFunction c2 = clip_candidate(f2, v_max, &out.clipped);
    Partition partition = bvft_partition(c1, c2, eps, v_max);
    out.n_cells = partition.n_cells;
    ValueFunction b1 = discretize(c1, eps, v_max);
    ValueFunction b2 = discretize(c2, eps, v_max);
    out.residual1 = projected_residual(b1, partition, tuples, pi, ctx);
    out.residual2 = projected_residual(b2, partition, tuples, pi, ctx);
    out.chosen = out.residual2 < out.residual1 - 1e-15 ? 1 : 0;
    return out;
}

SelectionReport bvft_tournament(const std::vector<ValueFunction>& candidates,
                                const TupleDataset& tuples, const StationaryPolicy& pi,
                                real eps, real v_max, const EvalContext& ctx) {
    const int m = static_cast<int>(candidates.size());
    if (m < 2) throw std::invalid_argument("tournament needs at least two candidates");
    SelectionReport rep;
    rep.pairwise_losses = Mat::Zero(m, m);
    for (int i = 0; i < m; ++i) {
        for (int j = i + 1; j < m; ++j) {
            PairResult pr = bvft_pair(candidates[i], candidates[j], tuples, pi, eps, v_max, ctx);
            rep.pairwise_losses(i, j) = pr.residual1;
            rep.pairwise_losses(j, i) = pr.residual2;
            rep.partitions_used.push_back(pr.n_cells);
            rep.clipped = rep.clipped || pr.clipped;
        }
    }
    real best = std::numeric_limits<real>::infinity();
    for (int i = 0; i < m; ++i) {
        real worst = 0.0;
        for (int j = 0; j < m; ++j)
            if (j != i) worst = std::max(worst, rep.pairwise_losses(i, j));
        if (worst < best - 1e-15) {
            best = worst;
            rep.winner_index = i;
        }
    }
    return rep;
}

} // namespace offrl
