#pragma once
// Brute-force retrieval reference for cross-checking the evaluator. Instead of
// sorting, it selects successive minima from an explicit candidate table and
// rebuilds CMC/AP from the resulting rank list. The relevance and exclusion
// rules are restated inline rather than shared, so an error in the evaluator's
// bookkeeping cannot cancel out here.

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "cclab/eval.hpp"
#include "cclab/tensor.hpp"

namespace cclab::testref {

template <typename T>
RetrievalReport brute_force_cmc_map(Direction dir, const Tensor<T>& qf,
                                    const std::vector<EvalItem>& qm, const Tensor<T>& gf,
                                    const std::vector<EvalItem>& gm) {
  const int nq = qf.dim(0), ng = gf.dim(0), d = qf.dim(1);
  RetrievalReport rep;
  rep.direction = dir;
  rep.n_gallery = ng;
  rep.cmc.assign(static_cast<std::size_t>(kCmcDepth), 0.0);
  double ap_sum = 0.0;
  int evaluated = 0, dropped = 0;

  struct Cand {
    double dist;
    int gallery_index;
    bool match;
    bool taken;
  };
  for (int i = 0; i < nq; ++i) {
    std::vector<Cand> cands;
    int n_match = 0;
    for (int j = 0; j < ng; ++j) {
      if (qm[static_cast<std::size_t>(i)].view == gm[static_cast<std::size_t>(j)].view) continue;
      bool match = qm[static_cast<std::size_t>(i)].identity ==
                   gm[static_cast<std::size_t>(j)].identity;
      if (dir == Direction::ClothChange)
        match = match && qm[static_cast<std::size_t>(i)].clothing !=
                             gm[static_cast<std::size_t>(j)].clothing;
      double sq = 0.0;
      for (int t = 0; t < d; ++t) {
        const double diff =
            static_cast<double>(qf.at2(i, t)) - static_cast<double>(gf.at2(j, t));
        sq += diff * diff;
      }
      cands.push_back(Cand{sq, j, match, false});
      n_match += match ? 1 : 0;
    }
    if (n_match == 0) {
      ++dropped;
      continue;
    }
    ++evaluated;
    std::vector<int> match_ranks;  // 1-based
    for (std::size_t r = 1; r <= cands.size(); ++r) {
      std::size_t best = cands.size();
      for (std::size_t c = 0; c < cands.size(); ++c) {
        if (cands[c].taken) continue;
        if (best == cands.size() || cands[c].dist < cands[best].dist ||
            (cands[c].dist == cands[best].dist &&
             cands[c].gallery_index < cands[best].gallery_index))
          best = c;
      }
      cands[best].taken = true;
      if (cands[best].match) match_ranks.push_back(static_cast<int>(r));
    }
    double ap = 0.0;
    for (std::size_t t = 0; t < match_ranks.size(); ++t)
      ap += static_cast<double>(t + 1) / static_cast<double>(match_ranks[t]);
    ap_sum += ap / static_cast<double>(match_ranks.size());
    for (int k = match_ranks[0]; k <= kCmcDepth; ++k) rep.cmc[static_cast<std::size_t>(k - 1)] += 1.0;
  }
  if (evaluated == 0) throw std::runtime_error("brute_force_cmc_map: every query dropped");
  for (double& v : rep.cmc) v /= static_cast<double>(evaluated);
  rep.map = ap_sum / static_cast<double>(evaluated);
  rep.n_queries = evaluated;
  rep.n_dropped = dropped;
  return rep;
}

}  // namespace cclab::testref
