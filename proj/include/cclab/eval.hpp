#pragma once
// Retrieval evaluation: query/gallery protocol construction, CMC curves, mAP.

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cclab/data.hpp"
#include "cclab/tensor.hpp"

namespace cclab {

// NirToRgb / RgbToNir query infrared (resp. color) images against the other
// modality. ClothChange retrieves within the color set across clothing ids.
enum class Direction { NirToRgb, RgbToNir, ClothChange };

const char* direction_name(Direction d);
Direction direction_from_string(const std::string& s);

struct EvalItem {
  int identity = 0;
  int view = 0;
  int clothing = 0;
};

// A gallery item that shares the query's view never enters the candidate
// list: the view index stands in for the capture camera, and same-camera
// matches are free wins that would inflate every metric.
inline bool is_excluded(const EvalItem& q, const EvalItem& g) { return q.view == g.view; }

// Cross-modality retrieval counts any same-identity candidate as a match.
// The cloth-change protocol additionally requires a different clothing id;
// a same-identity same-clothing candidate stays in the list as a distractor.
inline bool is_relevant(Direction dir, const EvalItem& q, const EvalItem& g) {
  if (q.identity != g.identity) return false;
  return dir == Direction::ClothChange ? q.clothing != g.clothing : true;
}

struct QueryGallery {
  Direction direction = Direction::NirToRgb;
  std::vector<int> query_idx;    // row indices into the source manifest
  std::vector<int> gallery_idx;  // (manifest order, so construction is deterministic)
  std::vector<EvalItem> query_meta;
  std::vector<EvalItem> gallery_meta;
};

QueryGallery build_query_gallery(const DatasetManifest& m, Direction dir);

constexpr int kCmcDepth = 20;

struct RetrievalReport {
  Direction direction = Direction::NirToRgb;
  std::vector<double> cmc;  // cmc[k-1] = fraction of queries with a match in the top k
  double map = 0.0;
  int n_queries = 0;  // queries that were evaluated
  int n_gallery = 0;
  int n_dropped = 0;  // queries with no reachable match, skipped and counted
};

// Rows of an N x D matrix selected by index, in the order given.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<int>& idx) {
  if (x.ndim() != 2) throw std::invalid_argument("gather_rows: expected NxD");
  const int d = x.dim(1);
  Tensor<T> out({static_cast<int>(idx.size()), d});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= x.dim(0))
      throw std::out_of_range("gather_rows: index " + std::to_string(idx[i]) + " outside " +
                              shape_str(x.shape));
    std::copy_n(x.ptr() + static_cast<std::size_t>(idx[i]) * d, d,
                out.ptr() + i * static_cast<std::size_t>(d));
  }
  return out;
}

// Ranked retrieval over one query set. Callers pass L2-normalized embeddings;
// the metric itself is well defined either way. Candidates are ordered by
// ascending Euclidean distance (squared form, same order) with ties broken by
// ascending gallery index. CMC[k] counts queries whose first match sits at
// rank <= k; AP averages precision at each match's rank. Queries whose
// candidate list holds no match are dropped and counted in the report.
template <typename T>
RetrievalReport cmc_map(Direction dir, const Tensor<T>& query_feats,
                        const std::vector<EvalItem>& query_meta, const Tensor<T>& gallery_feats,
                        const std::vector<EvalItem>& gallery_meta) {
  if (query_feats.ndim() != 2 || gallery_feats.ndim() != 2)
    throw std::invalid_argument("cmc_map: features must be NxD");
  if (query_feats.dim(1) != gallery_feats.dim(1))
    throw std::invalid_argument("cmc_map: feature width mismatch " + shape_str(query_feats.shape) +
                                " vs " + shape_str(gallery_feats.shape));
  if (query_feats.dim(0) != static_cast<int>(query_meta.size()) ||
      gallery_feats.dim(0) != static_cast<int>(gallery_meta.size()))
    throw std::invalid_argument("cmc_map: feature row count does not match metadata");
  const int nq = query_feats.dim(0);
  const int ng = gallery_feats.dim(0);
  const int d = query_feats.dim(1);
  if (nq == 0) throw std::invalid_argument("cmc_map: empty query set");
  if (ng == 0) throw std::invalid_argument("cmc_map: empty gallery");

  RetrievalReport rep;
  rep.direction = dir;
  rep.n_gallery = ng;
  rep.cmc.assign(kCmcDepth, 0.0);
  double ap_sum = 0.0;
  int evaluated = 0, dropped = 0;

  std::vector<std::pair<double, int>> order;  // (squared distance, gallery index)
  order.reserve(static_cast<std::size_t>(ng));
  for (int i = 0; i < nq; ++i) {
    order.clear();
    bool any_match = false;
    const T* q = query_feats.ptr() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < ng; ++j) {
      if (is_excluded(query_meta[i], gallery_meta[j])) continue;
      if (is_relevant(dir, query_meta[i], gallery_meta[j])) any_match = true;
      const T* g = gallery_feats.ptr() + static_cast<std::size_t>(j) * d;
      double sq = 0.0;
      for (int t = 0; t < d; ++t) {
        const double diff = static_cast<double>(q[t]) - static_cast<double>(g[t]);
        sq += diff * diff;
      }
      order.emplace_back(sq, j);
    }
    if (!any_match) {
      ++dropped;
      continue;
    }
    std::sort(order.begin(), order.end());  // pair order == distance then index
    ++evaluated;
    int matches_seen = 0;
    int first = -1;  // 0-based rank of the first match
    double ap = 0.0;
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (!is_relevant(dir, query_meta[i], gallery_meta[order[r].second])) continue;
      ++matches_seen;
      ap += static_cast<double>(matches_seen) / static_cast<double>(r + 1);
      if (first < 0) first = static_cast<int>(r);
    }
    ap_sum += ap / static_cast<double>(matches_seen);
    for (int k = first; k < kCmcDepth; ++k) rep.cmc[static_cast<std::size_t>(k)] += 1.0;
  }
  if (evaluated == 0)
    throw std::runtime_error("cmc_map: no query has a reachable match after view exclusion");
  for (double& v : rep.cmc) v /= static_cast<double>(evaluated);
  rep.map = ap_sum / static_cast<double>(evaluated);
  rep.n_queries = evaluated;
  rep.n_dropped = dropped;
  return rep;
}

// CSV rows: direction,k,value for k = 1..20, then map / n_queries / n_gallery /
// n_dropped summary rows per report. Fixed %.6f formatting keeps reruns
// byte-identical.
void write_report_csv(const std::string& path, const std::vector<RetrievalReport>& reports);

// Human-readable block for standard output.
std::string report_table(const RetrievalReport& r);

}  // namespace cclab
