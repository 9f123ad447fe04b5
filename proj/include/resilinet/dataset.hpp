#pragma once

// Labelled feature matrices: Gaussian-blob generator, CSV ingestion,
// stratified train/val/test split and train-statistics z-scoring.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "resilinet/errors.hpp"
#include "resilinet/nn_core.hpp"
#include "resilinet/rng.hpp"

namespace resilinet {

struct Dataset {
  Matrix<double> features;  // [N x F]
  std::vector<ClassLabel> labels;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t feature_count() const { return static_cast<std::size_t>(features.cols()); }

  Dataset subset(const std::vector<std::size_t>& rows) const {
    Dataset d;
    d.classes = classes;
    d.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    d.labels.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      d.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
      d.labels.push_back(labels[rows[i]]);
    }
    return d;
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> c(classes, 0);
    for (auto l : labels) ++c[static_cast<std::size_t>(l)];
    return c;
  }
};

struct SplitDataset {
  Dataset train;
  Dataset val;
  Dataset test;
};

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;

  void validate() const {
    if (train < 0 || val < 0 || test < 0 || std::abs(train + val + test - 1.0) > 1e-9)
      throw ValidationError("dataset.split: fractions must be nonnegative and sum to 1");
  }
};

/// Per-class shuffle, then the first round(train*n) rows of each class go to
/// train, the next round(val*n) to val and the rest to test. Each split is
/// shuffled again so classes interleave.
inline SplitDataset stratified_split(const Dataset& all, const SplitFractions& fr, std::uint64_t seed) {
  fr.validate();
  SeededRng rng(seed, Stream::Shuffle);
  std::vector<std::vector<std::size_t>> by_class(all.classes);
  for (std::size_t i = 0; i < all.size(); ++i) by_class[static_cast<std::size_t>(all.labels[i])].push_back(i);
  std::vector<std::size_t> tr, va, te;
  for (auto& rows : by_class) {
    rng.shuffle(rows.begin(), rows.end());
    const auto n = static_cast<double>(rows.size());
    const auto ntr = static_cast<std::size_t>(std::llround(fr.train * n));
    const auto nva = std::min(rows.size() - ntr, static_cast<std::size_t>(std::llround(fr.val * n)));
    tr.insert(tr.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(ntr));
    va.insert(va.end(), rows.begin() + static_cast<std::ptrdiff_t>(ntr),
              rows.begin() + static_cast<std::ptrdiff_t>(ntr + nva));
    te.insert(te.end(), rows.begin() + static_cast<std::ptrdiff_t>(ntr + nva), rows.end());
  }
  rng.shuffle(tr.begin(), tr.end());
  rng.shuffle(va.begin(), va.end());
  rng.shuffle(te.begin(), te.end());
  return {all.subset(tr), all.subset(va), all.subset(te)};
}

struct SyntheticSpec {
  std::size_t features = 23;
  std::size_t classes = 12;
  std::size_t samples_per_class = 200;
  double spread = 1.0;        // per-feature noise standard deviation
  double center_scale = 1.0;  // class centres ~ N(0, center_scale^2)
  std::uint64_t seed = 7;

  void validate() const {
    std::vector<std::string> errs;
    if (features < 1) errs.emplace_back("dataset.features: must be >= 1");
    if (classes < 2) errs.emplace_back("dataset.classes: must be >= 2");
    if (samples_per_class < 1) errs.emplace_back("dataset.samples_per_class: must be >= 1");
    if (!(spread >= 0)) errs.emplace_back("dataset.spread: must be >= 0");
    if (!errs.empty()) throw ValidationError(errs);
  }
};

/// Gaussian class blobs, exactly samples_per_class rows per class, split by
/// `fr`. Centres and noise come from the Data stream of spec.seed.
inline SplitDataset generate_synthetic(const SyntheticSpec& spec, const SplitFractions& fr = {}) {
  spec.validate();
  SeededRng rng(spec.seed, Stream::Data);
  Matrix<double> centers(static_cast<Eigen::Index>(spec.classes), static_cast<Eigen::Index>(spec.features));
  for (Eigen::Index c = 0; c < centers.rows(); ++c)
    for (Eigen::Index f = 0; f < centers.cols(); ++f) centers(c, f) = spec.center_scale * rng.normal();
  Dataset all;
  all.classes = spec.classes;
  const auto n = spec.classes * spec.samples_per_class;
  all.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(spec.features));
  all.labels.reserve(n);
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    for (std::size_t s = 0; s < spec.samples_per_class; ++s, ++row) {
      for (Eigen::Index f = 0; f < centers.cols(); ++f)
        all.features(row, f) = centers(static_cast<Eigen::Index>(c), f) + spec.spread * rng.normal();
      all.labels.push_back(static_cast<ClassLabel>(c));
    }
  }
  return stratified_split(all, fr, spec.seed);
}

struct Normalization {
  Vector<double> mean;
  Vector<double> stddev;
};

/// z-score every split with statistics of the train split (zero std -> 1).
inline Normalization normalize_with_train_stats(SplitDataset& ds) {
  Normalization nz;
  const auto& x = ds.train.features;
  const auto f = x.cols();
  nz.mean = Vector<double>::Zero(f);
  nz.stddev = Vector<double>::Ones(f);
  if (x.rows() > 0) {
    nz.mean = x.colwise().mean().transpose();
    for (Eigen::Index c = 0; c < f; ++c) {
      const double var = (x.col(c).array() - nz.mean(c)).square().mean();
      nz.stddev(c) = var > 0 ? std::sqrt(var) : 1.0;
    }
  }
  for (Dataset* d : {&ds.train, &ds.val, &ds.test}) {
    for (Eigen::Index r = 0; r < d->features.rows(); ++r)
      d->features.row(r) = (d->features.row(r) - nz.mean.transpose()).cwiseQuotient(nz.stddev.transpose());
  }
  return nz;
}

struct CsvSpec {
  std::string path;
  std::string label_column = "label";
  std::vector<long> drop_labels;  // rows with these labels are removed
  std::uint64_t seed = 7;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  }
  return out;
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [p, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && p == last && std::isfinite(out);
}

}  // namespace detail

/// Header row required. Every column except the label column is a numeric
/// feature; labels are integers, remapped to 0..C-1 in ascending order.
inline Dataset read_csv(const CsvSpec& spec) {
  std::ifstream in(spec.path);
  if (!in) throw ValidationError("dataset.path: cannot open '" + spec.path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("dataset.path: '" + spec.path + "' is empty");
  const auto header = detail::split_csv_line(line);
  const auto it = std::find(header.begin(), header.end(), spec.label_column);
  if (it == header.end())
    throw ValidationError("dataset.label_column: column '" + spec.label_column + "' not in header");
  const auto label_idx = static_cast<std::size_t>(it - header.begin());
  const std::set<long> drop(spec.drop_labels.begin(), spec.drop_labels.end());

  std::vector<std::vector<double>> rows;
  std::vector<long> raw_labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw ValidationError("dataset: row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                            " cells, header has " + std::to_string(header.size()));
    double lab = 0;
    if (!detail::parse_double(cells[label_idx], lab) || lab != std::floor(lab))
      throw ValidationError("dataset: row " + std::to_string(line_no) + " column '" + spec.label_column +
                            "': label '" + cells[label_idx] + "' is not an integer");
    if (drop.count(static_cast<long>(lab))) continue;
    std::vector<double> feats;
    feats.reserve(cells.size() - 1);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c == label_idx) continue;
      double v = 0;
      if (!detail::parse_double(cells[c], v))
        throw ValidationError("dataset: row " + std::to_string(line_no) + " column '" + header[c] + "': '" +
                              cells[c] + "' is not numeric");
      feats.push_back(v);
    }
    rows.push_back(std::move(feats));
    raw_labels.push_back(static_cast<long>(lab));
  }
  if (rows.empty()) throw ValidationError("dataset.path: no data rows in '" + spec.path + "'");

  std::map<long, ClassLabel> remap;
  for (long l : raw_labels) remap.emplace(l, 0);
  ClassLabel next = 0;
  for (auto& [k, v] : remap) v = next++;

  Dataset d;
  d.classes = remap.size();
  d.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(header.size() - 1));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      d.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    d.labels.push_back(remap[raw_labels[r]]);
  }
  return d;
}

/// read_csv + stratified split + train-statistics normalization.
inline SplitDataset load_csv(const CsvSpec& spec, const SplitFractions& fr = {}) {
  auto all = read_csv(spec);
  auto ds = stratified_split(all, fr, spec.seed);
  normalize_with_train_stats(ds);
  return ds;
}

inline void write_csv(const Dataset& d, std::ostream& out, const std::string& label_column = "label") {
  for (std::size_t f = 0; f < d.feature_count(); ++f) out << "f" << f << ",";
  out << label_column << "\n";
  out.precision(17);
  for (std::size_t r = 0; r < d.size(); ++r) {
    for (std::size_t f = 0; f < d.feature_count(); ++f)
      out << d.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f)) << ",";
    out << d.labels[r] << "\n";
  }
}

}  // namespace resilinet
