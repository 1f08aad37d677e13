#include "cclab/eval.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace cclab {

namespace {

std::string fmt6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

const char* direction_name(Direction d) {
  switch (d) {
    case Direction::NirToRgb: return "NIR->RGB";
    case Direction::RgbToNir: return "RGB->NIR";
    case Direction::ClothChange: return "CC";
  }
  throw std::logic_error("direction_name: bad enum value");
}

Direction direction_from_string(const std::string& s) {
  if (s == "NIR->RGB" || s == "nir2rgb") return Direction::NirToRgb;
  if (s == "RGB->NIR" || s == "rgb2nir") return Direction::RgbToNir;
  if (s == "CC" || s == "cc") return Direction::ClothChange;
  throw std::invalid_argument("unknown direction '" + s +
                              "' (expected nir2rgb, rgb2nir, or cc)");
}

QueryGallery build_query_gallery(const DatasetManifest& m, Direction dir) {
  QueryGallery qg;
  qg.direction = dir;
  auto push = [&m](std::vector<int>& idx, std::vector<EvalItem>& meta, int row) {
    const ManifestRow& r = m.rows[static_cast<std::size_t>(row)];
    idx.push_back(row);
    meta.push_back(EvalItem{r.identity, r.view, r.clothing});
  };
  if (dir == Direction::ClothChange) {
    std::set<int> cloth_ids;
    for (int row = 0; row < static_cast<int>(m.rows.size()); ++row) {
      if (m.rows[static_cast<std::size_t>(row)].modality != Modality::RGB) continue;
      push(qg.query_idx, qg.query_meta, row);
      push(qg.gallery_idx, qg.gallery_meta, row);
      cloth_ids.insert(m.rows[static_cast<std::size_t>(row)].clothing);
    }
    if (qg.query_idx.empty())
      throw std::invalid_argument("cloth-change protocol: manifest has no rgb rows");
    if (cloth_ids.size() < 2)
      throw std::invalid_argument(
          "cloth-change protocol needs at least two clothing ids; manifest has one");
  } else {
    const Modality query_mod = dir == Direction::NirToRgb ? Modality::IR : Modality::RGB;
    for (int row = 0; row < static_cast<int>(m.rows.size()); ++row) {
      const bool is_query = m.rows[static_cast<std::size_t>(row)].modality == query_mod;
      push(is_query ? qg.query_idx : qg.gallery_idx,
           is_query ? qg.query_meta : qg.gallery_meta, row);
    }
    if (qg.query_idx.empty())
      throw std::invalid_argument(std::string("protocol ") + direction_name(dir) +
                                  ": manifest has no " +
                                  (query_mod == Modality::IR ? "ir" : "rgb") +
                                  " rows for the query side");
    if (qg.gallery_idx.empty())
      throw std::invalid_argument(std::string("protocol ") + direction_name(dir) +
                                  ": manifest has no rows for the gallery side");
  }
  return qg;
}

void write_report_csv(const std::string& path, const std::vector<RetrievalReport>& reports) {
  std::ostringstream os;
  os << "direction,k,value\n";
  for (const RetrievalReport& r : reports) {
    const char* name = direction_name(r.direction);
    for (int k = 1; k <= kCmcDepth; ++k)
      os << name << ',' << k << ',' << fmt6(r.cmc[static_cast<std::size_t>(k - 1)]) << '\n';
    os << name << ",map," << fmt6(r.map) << '\n';
    os << name << ",n_queries," << r.n_queries << '\n';
    os << name << ",n_gallery," << r.n_gallery << '\n';
    os << name << ",n_dropped," << r.n_dropped << '\n';
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open report file " + path);
  f << os.str();
  if (!f.flush()) throw std::runtime_error("failed writing report file " + path);
}

std::string report_table(const RetrievalReport& r) {
  std::ostringstream os;
  os << "direction " << direction_name(r.direction) << ": queries=" << r.n_queries
     << " gallery=" << r.n_gallery << " dropped=" << r.n_dropped << '\n';
  os << "  Rank-1  " << fmt6(r.cmc[0]) << "  Rank-5  " << fmt6(r.cmc[4]) << "  Rank-10 "
     << fmt6(r.cmc[9]) << "  Rank-20 " << fmt6(r.cmc[19]) << '\n';
  os << "  mAP     " << fmt6(r.map) << '\n';
  return os.str();
}

}  // namespace cclab
