#pragma once

#include <filesystem>
#include <sstream>
#include <string>

#include "slt/data/container.hpp"
#include "slt/model/rollout.hpp"
#include "slt/model/slt_model.hpp"
#include "slt/solver/solver.hpp"

namespace slt::data {

namespace detail {

inline void expect_kind(const Container& c, Kind k, const std::string& what) {
  if (c.kind != k)
    throw CorruptHeader(what + ": expected a " + kind_name(k) + " file, found " + kind_name(c.kind));
}

inline const Array& shaped(const Container& c, const std::string& name, std::size_t rank) {
  const auto& a = c.array(name);
  if (a.shape.size() != rank) throw CorruptHeader("container: array '" + name + "' has the wrong rank");
  return a;
}

}  // namespace detail

// ---- zonal records -------------------------------------------------------

/// Arrays "times" (T) and "U" (T, ny); metadata holds the solver config.
inline Container to_container(const solver::ZonalRecord& r, DType dtype = DType::f64, double norm_mean = 0.0,
                              double norm_std = 1.0) {
  Container c;
  c.kind = Kind::zonal_record;
  c.dtype = dtype;
  c.record_interval = r.record_interval;
  c.norm_mean = norm_mean;
  c.norm_std = norm_std;
  c.meta = json{{"solver", r.config}};
  if (r.config.is_object() && r.config.contains("seed")) c.seed = r.config["seed"].get<std::uint64_t>();
  c.add("times", {r.rows()}, r.times);
  c.add("U", {r.rows(), r.ny}, r.U);
  return c;
}

inline solver::ZonalRecord record_from(const Container& c, const std::string& what = "record") {
  detail::expect_kind(c, Kind::zonal_record, what);
  const auto& t = detail::shaped(c, "times", 1);
  const auto& u = detail::shaped(c, "U", 2);
  if (u.shape[0] != t.shape[0]) throw CorruptHeader(what + ": times and U disagree on the row count");
  solver::ZonalRecord r;
  r.ny = std::size_t(u.shape[1]);
  r.record_interval = c.record_interval;
  r.times = t.values;
  r.U = u.values;
  r.config = c.meta.value("solver", json::object());
  return r;
}

inline void write_record(const std::filesystem::path& path, const solver::ZonalRecord& r, DType dtype = DType::f64) {
  save(path, to_container(r, dtype));
}

inline solver::ZonalRecord read_record(const std::filesystem::path& path) {
  return record_from(load(path), path.string());
}

/// t,y0,...,y{ny-1}
inline void record_csv(const solver::ZonalRecord& r, std::ostream& out) {
  out << "t";
  for (std::size_t j = 0; j < r.ny; ++j) out << ",y" << j;
  out << '\n';
  out.precision(17);
  for (std::size_t t = 0; t < r.rows(); ++t) {
    out << r.times[t];
    for (double v : r.row(t)) out << ',' << v;
    out << '\n';
  }
}

// ---- ensemble forecasts --------------------------------------------------

inline Container to_container(const model::EnsembleForecast& f, std::uint64_t seed, const json& meta = json::object(),
                              DType dtype = DType::f64) {
  Container c;
  c.kind = Kind::forecast;
  c.dtype = dtype;
  c.seed = seed;
  c.meta = meta;
  c.add("U", {f.members, f.horizon, f.ny}, f.U);
  std::vector<double> div(f.diverged_step.begin(), f.diverged_step.end());
  c.add("diverged_step", {f.members}, std::move(div));
  return c;
}

inline model::EnsembleForecast forecast_from(const Container& c, const std::string& what = "forecast") {
  detail::expect_kind(c, Kind::forecast, what);
  const auto& u = detail::shaped(c, "U", 3);
  model::EnsembleForecast f;
  f.members = std::size_t(u.shape[0]);
  f.horizon = std::size_t(u.shape[1]);
  f.ny = std::size_t(u.shape[2]);
  f.U = u.values;
  f.diverged_step.assign(f.members, -1);
  if (c.has("diverged_step")) {
    const auto& d = c.array("diverged_step");
    if (d.values.size() != f.members) throw CorruptHeader(what + ": diverged_step length mismatch");
    for (std::size_t m = 0; m < f.members; ++m) f.diverged_step[m] = long(d.values[m]);
  }
  return f;
}

/// member,t,y0,...
inline void forecast_csv(const model::EnsembleForecast& f, std::ostream& out) {
  out << "member,t";
  for (std::size_t j = 0; j < f.ny; ++j) out << ",y" << j;
  out << '\n';
  out.precision(17);
  for (std::size_t m = 0; m < f.members; ++m)
    for (std::size_t t = 0; t < f.horizon; ++t) {
      out << m << ',' << t + 1;
      for (double v : f.row(m, t)) out << ',' << v;
      out << '\n';
    }
}

// ---- model checkpoints ---------------------------------------------------

/// Parameters by name, always f64; metadata carries the model config.
inline Container to_container(const model::SltModel& m, const json& extra = json::object()) {
  Container c;
  c.kind = Kind::model_checkpoint;
  c.dtype = DType::f64;
  c.norm_mean = m.norm_mean;
  c.norm_std = m.norm_std;
  c.seed = m.config().init_seed;
  c.meta = json{{"model", m.config()}, {"extra", extra}};
  for (const auto& p : m.params()) {
    std::vector<std::uint64_t> shape(p.tensor.shape().begin(), p.tensor.shape().end());
    c.add(p.name, std::move(shape), p.tensor.value());
  }
  return c;
}

/// Rebuilds a model; every parameter must be present with its exact shape.
inline model::SltModel model_from(const Container& c, const std::string& what = "checkpoint") {
  detail::expect_kind(c, Kind::model_checkpoint, what);
  model::ModelConfig cfg;
  try {
    cfg = c.meta.at("model").get<model::ModelConfig>();
  } catch (const json::exception&) {
    throw CorruptHeader(what + ": metadata lacks a model config");
  } catch (const ConfigError& e) {
    throw CorruptHeader(what + ": " + e.what());
  }
  model::SltModel m(cfg);
  m.norm_mean = c.norm_mean;
  m.norm_std = c.norm_std;
  if (c.arrays.size() != m.params().size())
    throw CorruptHeader(what + ": parameter count " + std::to_string(c.arrays.size()) + ", model expects " +
                        std::to_string(m.params().size()));
  for (auto& p : m.params()) {
    const auto& a = c.array(p.name);
    if (!std::equal(a.shape.begin(), a.shape.end(), p.tensor.shape().begin(), p.tensor.shape().end()))
      throw CorruptHeader(what + ": parameter '" + p.name + "' has the wrong shape");
    p.tensor.value() = a.values;
  }
  return m;
}

inline void save_model(const std::filesystem::path& path, const model::SltModel& m, const json& extra = json::object()) {
  save(path, to_container(m, extra));
}

inline model::SltModel load_model(const std::filesystem::path& path) { return model_from(load(path), path.string()); }

// ---- solver checkpoints --------------------------------------------------

/// Vorticity spectrum "zeta_hat" (ny, nkx, 2) plus clock and RNG state.
inline Container to_container(const solver::SolverState& s, const solver::SolverConfig& cfg) {
  Container c;
  c.kind = Kind::spectral_checkpoint;
  c.dtype = DType::f64;
  c.record_interval = cfg.record_interval;
  c.seed = cfg.seed;
  std::ostringstream rng;
  rng << s.rng;
  c.meta = json{{"solver", cfg}, {"step_index", s.step_index}, {"dt", s.dt}, {"rng", rng.str()}};
  const auto& g = *s.zeta_hat.grid;
  std::vector<double> z;
  z.reserve(2 * s.zeta_hat.coeffs.size());
  for (auto v : s.zeta_hat.coeffs) {
    z.push_back(v.real());
    z.push_back(v.imag());
  }
  c.add("zeta_hat", {g.ny(), g.nkx(), 2}, std::move(z));
  return c;
}

inline solver::SolverState state_from(const Container& c, const solver::GridPtr& grid,
                                      const std::string& what = "checkpoint") {
  detail::expect_kind(c, Kind::spectral_checkpoint, what);
  const auto& a = detail::shaped(c, "zeta_hat", 3);
  if (a.shape[0] != grid->ny() || a.shape[1] != grid->nkx() || a.shape[2] != 2)
    throw CorruptHeader(what + ": spectrum does not match the solver grid");
  solver::SolverState s{spectral::SpectralField2D(grid), 0, 0.0, Rng()};
  try {
    s.step_index = c.meta.at("step_index").get<std::int64_t>();
    s.dt = c.meta.at("dt").get<double>();
    std::istringstream in(c.meta.at("rng").get<std::string>());
    in >> s.rng;
    if (!in) throw CorruptHeader(what + ": unreadable RNG state");
  } catch (const json::exception&) {
    throw CorruptHeader(what + ": incomplete solver metadata");
  }
  for (std::size_t i = 0; i < s.zeta_hat.coeffs.size(); ++i)
    s.zeta_hat.coeffs[i] = {a.values[2 * i], a.values[2 * i + 1]};
  return s;
}

}  // namespace slt::data
