#include "vcgsa/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vcgsa/errors.hpp"

namespace vcgsa {

void CountMatrix::validate() const {
  const auto P = static_cast<std::size_t>(counts.rows());
  const auto S = static_cast<std::size_t>(counts.cols());
  if (P < 1 || S < 1) throw ValidationError("count matrix is empty");
  if (gene_ids.size() != P)
    throw ValidationError("gene id count does not match matrix rows");
  if (sample_ids.size() != S)
    throw ValidationError("sample id count does not match matrix columns");
  for (std::size_t r = 0; r < P; ++r)
    for (std::size_t c = 0; c < S; ++c) {
      double x = counts(r, c);
      if (!std::isfinite(x) || x < 0 || x != std::floor(x))
        throw ValidationError("count for gene " + gene_ids[r] + ", sample " +
                              sample_ids[c] +
                              " is not a non-negative integer");
    }
  std::set<std::string> seen(gene_ids.begin(), gene_ids.end());
  if (seen.size() != P) throw ValidationError("duplicate gene id");
  std::set<std::string> sseen(sample_ids.begin(), sample_ids.end());
  if (sseen.size() != S) throw ValidationError("duplicate sample id");
}

Eigen::MatrixXd LongitudinalDesign::reorder_columns(
    const Eigen::MatrixXd& m) const {
  if (static_cast<std::size_t>(m.cols()) != source_column.size())
    throw ValidationError("matrix width does not match design");
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (std::size_t k = 0; k < source_column.size(); ++k)
    out.col(static_cast<Eigen::Index>(k)) =
        m.col(static_cast<Eigen::Index>(source_column[k]));
  return out;
}

void LongitudinalDesign::check_consistent() const {
  const std::size_t n = subject_ids.size();
  if (block_offset.size() != n + 1 || block_offset.front() != 0)
    throw ValidationError("malformed subject blocks");
  const std::size_t N = times.size();
  if (block_offset.back() != N) throw ValidationError("malformed subject blocks");
  for (std::size_t i = 0; i < n; ++i) {
    if (block_offset[i + 1] <= block_offset[i])
      throw ValidationError("subject " + subject_ids[i] + " has no samples");
    for (std::size_t k = block_offset[i] + 1; k < block_offset[i + 1]; ++k)
      if (times[k] < times[k - 1])
        throw ValidationError("times not ascending within subject " +
                              subject_ids[i]);
  }
  if (static_cast<std::size_t>(covariates.rows()) != N)
    throw ValidationError("covariate rows do not match observations");
  if (covariate_names.size() != static_cast<std::size_t>(covariates.cols()))
    throw ValidationError("covariate names do not match columns");
  if (sample_ids.size() != N || source_column.size() != N)
    throw ValidationError("sample bookkeeping does not match observations");
  for (double t : times)
    if (!std::isfinite(t)) throw ValidationError("non-finite time");
  for (Eigen::Index r = 0; r < covariates.rows(); ++r)
    for (Eigen::Index c = 0; c < covariates.cols(); ++c)
      if (!std::isfinite(covariates(r, c)))
        throw ValidationError("missing covariate value");
}

LongitudinalDesign validate_dataset(const CountMatrix& counts,
                                    const std::vector<SampleInfo>& meta) {
  counts.validate();

  std::map<std::string, std::size_t> column_of;
  for (std::size_t c = 0; c < counts.sample_ids.size(); ++c)
    column_of[counts.sample_ids[c]] = c;

  std::map<std::string, const SampleInfo*> meta_of;
  std::size_t q = meta.empty() ? 0 : meta.front().covariates.size();
  for (const auto& m : meta) {
    if (!column_of.count(m.sample_id))
      throw ValidationError("unknown sample " + m.sample_id +
                            " in metadata");
    if (!meta_of.emplace(m.sample_id, &m).second)
      throw ValidationError("duplicate sample " + m.sample_id +
                            " in metadata");
    if (!std::isfinite(m.time))
      throw ValidationError("non-numeric time for sample " + m.sample_id);
    if (m.covariates.size() != q)
      throw ValidationError("covariate count differs for sample " +
                            m.sample_id);
    for (double x : m.covariates)
      if (!std::isfinite(x))
        throw ValidationError("missing covariate for sample " + m.sample_id);
  }
  for (const auto& id : counts.sample_ids)
    if (!meta_of.count(id)) throw ValidationError("unmapped sample " + id);

  // Group into subjects; the map keeps subjects lexicographic.
  std::map<std::string, std::vector<const SampleInfo*>> groups;
  for (const auto& m : meta) groups[m.subject_id].push_back(&m);

  LongitudinalDesign d;
  for (auto& [subject, rows] : groups) {
    for (const auto* r : rows)
      if (r->covariates != rows.front()->covariates)
        throw ValidationError("subject " + subject +
                              " has inconsistent covariates");
    std::sort(rows.begin(), rows.end(),
              [](const SampleInfo* a, const SampleInfo* b) {
                if (a->time != b->time) return a->time < b->time;
                return a->sample_id < b->sample_id;
              });
    d.subject_ids.push_back(subject);
    for (const auto* r : rows) {
      d.times.push_back(r->time);
      d.sample_ids.push_back(r->sample_id);
      d.source_column.push_back(column_of.at(r->sample_id));
    }
  }

  const std::size_t N = d.times.size();
  d.block_offset.assign(1, 0);
  for (const auto& [subject, rows] : groups)
    d.block_offset.push_back(d.block_offset.back() + rows.size());

  d.covariates.resize(static_cast<Eigen::Index>(N),
                      static_cast<Eigen::Index>(q));
  for (std::size_t k = 0; k < N; ++k) {
    const auto& cov = meta_of.at(d.sample_ids[k])->covariates;
    for (std::size_t j = 0; j < q; ++j)
      d.covariates(static_cast<Eigen::Index>(k),
                   static_cast<Eigen::Index>(j)) = cov[j];
  }
  d.covariate_names.resize(q);
  for (std::size_t j = 0; j < q; ++j)
    d.covariate_names[j] = "x" + std::to_string(j + 1);

  d.check_consistent();
  return d;
}

LongitudinalDesign make_design(std::vector<std::string> subject_ids,
                               std::vector<std::size_t> block_offset,
                               std::vector<double> times,
                               Eigen::MatrixXd covariates) {
  LongitudinalDesign d;
  d.subject_ids = std::move(subject_ids);
  d.block_offset = std::move(block_offset);
  d.times = std::move(times);
  d.covariates = std::move(covariates);
  const std::size_t N = d.times.size();
  const std::size_t q = static_cast<std::size_t>(d.covariates.cols());
  d.covariate_names.resize(q);
  for (std::size_t j = 0; j < q; ++j)
    d.covariate_names[j] = "x" + std::to_string(j + 1);
  d.sample_ids.resize(N);
  d.source_column.resize(N);
  for (std::size_t i = 0; i < d.subject_ids.size(); ++i)
    for (std::size_t k = d.block_offset[i]; k < d.block_offset[i + 1]; ++k)
      d.sample_ids[k] =
          d.subject_ids[i] + "." +
          std::to_string(k - d.block_offset[i] + 1);
  std::iota(d.source_column.begin(), d.source_column.end(), std::size_t{0});
  d.check_consistent();
  return d;
}

std::string design_to_json(const LongitudinalDesign& d) {
  nlohmann::json j;
  j["subject_ids"] = d.subject_ids;
  j["block_offset"] = d.block_offset;
  j["times"] = d.times;
  std::vector<std::vector<double>> cov(d.n_obs());
  for (std::size_t r = 0; r < d.n_obs(); ++r) {
    cov[r].resize(d.n_covariates());
    for (std::size_t c = 0; c < d.n_covariates(); ++c)
      cov[r][c] = d.covariates(static_cast<Eigen::Index>(r),
                               static_cast<Eigen::Index>(c));
  }
  j["covariates"] = cov;
  j["covariate_names"] = d.covariate_names;
  j["sample_ids"] = d.sample_ids;
  j["source_column"] = d.source_column;
  return j.dump();
}

LongitudinalDesign design_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad design JSON: ") + e.what());
  }
  LongitudinalDesign d;
  try {
    j.at("subject_ids").get_to(d.subject_ids);
    j.at("block_offset").get_to(d.block_offset);
    j.at("times").get_to(d.times);
    std::vector<std::vector<double>> cov;
    j.at("covariates").get_to(cov);
    j.at("covariate_names").get_to(d.covariate_names);
    j.at("sample_ids").get_to(d.sample_ids);
    j.at("source_column").get_to(d.source_column);
    const std::size_t N = d.times.size();
    const std::size_t q = d.covariate_names.size();
    d.covariates.resize(static_cast<Eigen::Index>(N),
                        static_cast<Eigen::Index>(q));
    for (std::size_t r = 0; r < N; ++r) {
      if (cov.at(r).size() != q)
        throw ValidationError("ragged covariates in design JSON");
      for (std::size_t c = 0; c < q; ++c)
        d.covariates(static_cast<Eigen::Index>(r),
                     static_cast<Eigen::Index>(c)) = cov[r][c];
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad design JSON: ") + e.what());
  }
  d.check_consistent();
  return d;
}

Eigen::VectorXd TimeBasis::evaluate(double t) const {
  if (!std::isfinite(t)) throw ValidationError("non-finite time");
  Eigen::VectorXd out(K);
  switch (kind) {
    case Kind::Linear:
      out(0) = t;
      break;
    case Kind::Polynomial: {
      double acc = 1;
      for (int k = 0; k < K; ++k) {
        acc *= t;
        out(k) = acc;
      }
      break;
    }
    case Kind::Spline: {
      out(0) = t;
      for (std::size_t k = 0; k < knots.size(); ++k)
        out(static_cast<Eigen::Index>(k) + 1) = std::max(t - knots[k], 0.0);
      break;
    }
  }
  return out;
}

Eigen::MatrixXd TimeBasis::rows(const std::vector<double>& times) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(times.size()), K);
  for (std::size_t r = 0; r < times.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = evaluate(times[r]).transpose();
  return out;
}

TimeBasis TimeBasis::linear() { return TimeBasis{}; }

TimeBasis TimeBasis::polynomial(int degree) {
  if (degree < 1) throw ValidationError("polynomial degree must be >= 1");
  TimeBasis b;
  b.kind = Kind::Polynomial;
  b.degree = degree;
  b.K = degree;
  return b;
}

TimeBasis TimeBasis::spline(int n_knots, const std::vector<double>& times) {
  if (n_knots < 1) throw ValidationError("spline needs at least one knot");
  if (times.size() < 2)
    throw ValidationError("spline knots need at least two times");
  std::vector<double> sorted(times);
  std::sort(sorted.begin(), sorted.end());
  TimeBasis b;
  b.kind = Kind::Spline;
  b.degree = 1;
  // Knots at equally spaced quantiles, linear interpolation between order
  // statistics.
  for (int k = 1; k <= n_knots; ++k) {
    double pos = double(k) / (n_knots + 1) * (sorted.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    auto hi = static_cast<std::size_t>(std::ceil(pos));
    double frac = pos - double(lo);
    b.knots.push_back(sorted[lo] * (1 - frac) + sorted[hi] * frac);
  }
  b.K = n_knots + 1;
  return b;
}

TimeBasis TimeBasis::parse(const std::string& text,
                           const std::vector<double>& times) {
  if (text == "linear") return linear();
  auto colon = text.find(':');
  if (colon != std::string::npos) {
    std::string head = text.substr(0, colon);
    int value = 0;
    try {
      value = std::stoi(text.substr(colon + 1));
    } catch (const std::exception&) {
      throw ValidationError("bad basis argument in '" + text + "'");
    }
    if (head == "poly") return polynomial(value);
    if (head == "spline") return spline(value, times);
  }
  throw ValidationError("unknown basis '" + text +
                        "' (expected linear, poly:d, or spline:k)");
}

std::string TimeBasis::describe() const {
  switch (kind) {
    case Kind::Linear:
      return "linear";
    case Kind::Polynomial:
      return "poly:" + std::to_string(degree);
    case Kind::Spline:
      return "spline:" + std::to_string(knots.size());
  }
  return "linear";
}

DesignMatrix design_matrix(const LongitudinalDesign& d,
                           const TimeBasis* basis) {
  const auto N = static_cast<Eigen::Index>(d.n_obs());
  const auto q = static_cast<Eigen::Index>(d.n_covariates());
  const Eigen::Index K = basis ? basis->K : 0;
  DesignMatrix m;
  m.A.resize(N, 1 + q + K);
  m.A.col(0).setOnes();
  m.names.push_back("(intercept)");
  if (q > 0) {
    m.A.block(0, 1, N, q) = d.covariates;
    for (const auto& name : d.covariate_names) m.names.push_back(name);
  }
  if (basis) {
    m.A.block(0, 1 + q, N, K) = basis->rows(d.times);
    for (int k = 0; k < K; ++k)
      m.names.push_back("basis" + std::to_string(k + 1));
  }
  return m;
}

const char* to_string(SetMode m) {
  return m == SetMode::Heterogeneous ? "hetero" : "homo";
}

const char* to_string(TestKind t) {
  switch (t) {
    case TestKind::Asymptotic:
      return "asymptotic";
    case TestKind::Permutation:
      return "permutation";
    case TestKind::Both:
      return "both";
  }
  return "asymptotic";
}

const char* to_string(WeightStrategy w) {
  switch (w) {
    case WeightStrategy::GeneLevel:
      return "gene";
    case WeightStrategy::ObservationLevel:
      return "obs";
    case WeightStrategy::Voom:
      return "voom";
    case WeightStrategy::Identity:
      return "identity";
  }
  return "gene";
}

} // namespace vcgsa
