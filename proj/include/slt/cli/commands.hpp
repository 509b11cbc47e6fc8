#pragma once

// Subcommands behind the slt command-line tool. run_cli() takes the same
// arguments as main() and never exits the process, so tests and the
// acceptance harness drive it in-process.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "slt/core/errors.hpp"
#include "slt/core/json_util.hpp"
#include "slt/data/artifacts.hpp"
#include "slt/data/dataset.hpp"
#include "slt/diagnostics/pdf.hpp"
#include "slt/diagnostics/statistics.hpp"
#include "slt/model/rollout.hpp"
#include "slt/solver/solver.hpp"
#include "slt/training/trainer.hpp"

namespace slt::cli {

namespace fs = std::filesystem;

struct DiagnosticsConfig {
  std::size_t bins = 128;
  std::size_t persistence = 3;
};

inline void to_json(json& j, const DiagnosticsConfig& c) { j = json{{"bins", c.bins}, {"persistence", c.persistence}}; }
inline void from_json(const json& j, DiagnosticsConfig& c) {
  check_keys(j, {"bins", "persistence"}, "diagnostics");
  read_opt(j, "bins", c.bins, "diagnostics");
  read_opt(j, "persistence", c.persistence, "diagnostics");
}

/// Default inputs, used when the matching flag is absent.
struct PathsConfig {
  std::string record, model, forecast;
};

inline void to_json(json& j, const PathsConfig& c) {
  j = json{{"record", c.record}, {"model", c.model}, {"forecast", c.forecast}};
}
inline void from_json(const json& j, PathsConfig& c) {
  check_keys(j, {"record", "model", "forecast"}, "paths");
  read_opt(j, "record", c.record, "paths");
  read_opt(j, "model", c.model, "paths");
  read_opt(j, "forecast", c.forecast, "paths");
}

struct RunConfig {
  solver::SolverConfig solver = solver::desk_solver_config();
  model::ModelConfig model = model::desk_model_config();
  training::TrainConfig train;
  DiagnosticsConfig diagnostics;
  PathsConfig paths;
  std::uint64_t seed = 0;

  void validate() const {
    solver.validate();
    model.validate();
    train.validate();
    if (diagnostics.bins < 1) throw ConfigError("diagnostics.bins must be >= 1");
    if (diagnostics.persistence < 1) throw ConfigError("diagnostics.persistence must be >= 1");
  }
};

inline void to_json(json& j, const RunConfig& c) {
  j = json{{"solver", c.solver}, {"model", c.model},  {"train", c.train},
           {"diagnostics", c.diagnostics}, {"paths", c.paths}, {"seed", c.seed}};
}

inline void from_json(const json& j, RunConfig& c) {
  check_keys(j, {"solver", "model", "train", "diagnostics", "paths", "seed"}, "config");
  if (j.contains("solver")) from_json(j.at("solver"), c.solver);
  if (j.contains("model")) from_json(j.at("model"), c.model);
  if (j.contains("train")) from_json(j.at("train"), c.train);
  if (j.contains("diagnostics")) from_json(j.at("diagnostics"), c.diagnostics);
  if (j.contains("paths")) from_json(j.at("paths"), c.paths);
  read_opt(j, "seed", c.seed, "config");
}

/// Applies "a.b.c=value"; the value is parsed as JSON, else taken as a string.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("--set: empty path component in '" + path + "'");
    if (!node->is_object()) throw ConfigError("--set: '" + path + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

inline RunConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ConfigError("config " + path + " is not valid JSON");
  }
  for (const auto& o : overrides) apply_override(doc, o);
  RunConfig c;
  from_json(doc, c);
  c.validate();
  return c;
}

/// Machine-readable error line for stderr.
inline std::string error_line(const std::string& kind, int code, const std::string& message) {
  return json{{"error", kind}, {"exit_code", code}, {"message", message}}.dump();
}

namespace detail {

inline void write_text(const fs::path& path, const std::string& text) { data::write_file(path, text); }

/// Resolved config, loadable again with --config.
inline void write_config(const fs::path& dir, const RunConfig& c) {
  const json j = c;
  write_text(dir / "config.json", j.dump(2) + "\n");
}

inline std::string first_nonempty(const std::string& a, const std::string& b, const char* what) {
  if (!a.empty()) return a;
  if (!b.empty()) return b;
  throw ConfigError(std::string("missing input: pass --") + what + " or set paths." + what);
}

/// Row whose timestamp is t0.
inline std::size_t row_at(const solver::ZonalRecord& r, double t0) {
  for (std::size_t i = 0; i < r.rows(); ++i)
    if (std::abs(r.times[i] - t0) <= 1e-6 * std::max(1.0, std::abs(t0))) return i;
  throw ConfigError("no record at t0 = " + std::to_string(t0));
}

/// S rows ending at `last` (inclusive), oldest first.
inline std::vector<double> history_rows(const solver::ZonalRecord& r, std::size_t last, std::size_t S) {
  if (last + 1 < S)
    throw ConfigError("history needs " + std::to_string(S) + " rows up to row " + std::to_string(last));
  const auto first = r.U.begin() + long((last + 1 - S) * r.ny);
  return {first, first + long(S * r.ny)};
}

template <class F>
void write_csv(const fs::path& path, F&& fill) {
  std::ostringstream out;
  fill(out);
  write_text(path, out.str());
}

}  // namespace detail

// ---- subcommands ----------------------------------------------------------

struct SimulateArgs {
  bool checkpoint = false;
};

inline void cmd_simulate(const RunConfig& c, const fs::path& out, const SimulateArgs& a, std::ostream& log) {
  std::optional<solver::SolverState> last;
  std::size_t shown = 0;
  auto progress = [&](std::size_t i, std::size_t n) {
    if (i * 10 / n > shown) {
      shown = i * 10 / n;
      log << "simulate: " << i << "/" << n << " records\n";
    }
  };
  try {
    solver::BetaPlaneSolver s(c.solver);
    last = s.initial_state();
    const auto rec = solver::run_and_record(c.solver, progress, nullptr, &*last);
    data::write_record(out / "record.sltd", rec);
    if (a.checkpoint) data::save(out / "checkpoint.sltd", data::to_container(*last, c.solver));
  } catch (const solver::RecordingAborted& e) {
    data::write_file(out / "record.sltd.partial", data::encode(data::to_container(e.partial())));
    throw;
  }
}

inline void cmd_dataset(const RunConfig& c, const fs::path& out, const std::string& record_path) {
  const auto rec = data::read_record(record_path);
  if (rec.ny != std::size_t(c.model.ny))
    throw ConfigError("record has ny = " + std::to_string(rec.ny) + ", model.ny is " + std::to_string(c.model.ny));
  const auto [train_rows, val_rows] = data::split(data::RecordView(rec), c.train.val_len);
  const auto norm = data::normalization_stats(train_rows);
  auto container = data::to_container(rec, data::DType::f64, norm.mean, norm.std);
  container.meta["split"] = {{"train_rows", train_rows.rows}, {"val_rows", val_rows.rows}};
  container.meta["source"] = fs::path(record_path).filename().string();
  data::save(out / "dataset.sltd", container);
}

inline void cmd_train(const RunConfig& c, const fs::path& out, const std::string& record_path, std::ostream& log) {
  const auto rec = data::read_record(record_path);
  if (rec.ny != std::size_t(c.model.ny))
    throw ConfigError("record has ny = " + std::to_string(rec.ny) + ", model.ny is " + std::to_string(c.model.ny));
  const auto [train_rows, val_rows] = data::split(data::RecordView(rec), c.train.val_len);
  model::SltModel m(c.model);
  std::ostringstream metrics;
  training::metrics_csv_header(metrics);
  training::TrainHooks hooks;
  hooks.checkpoint = out / "model.sltd";
  hooks.on_epoch = [&](const training::EpochMetrics& e) {
    training::metrics_csv_row(metrics, e);
    log << "train: epoch " << e.epoch << " train " << e.train.total << " val " << e.val.total << "\n";
  };
  try {
    const auto result = training::train(m, train_rows, val_rows, c.train, hooks);
    data::save_model(out / "model.sltd", m, {{"epoch", result.best_epoch}, {"val_total", result.best_val}});
  } catch (const DivergenceError&) {
    detail::write_text(out / "metrics.csv.partial", metrics.str());
    throw;
  }
  detail::write_text(out / "metrics.csv", metrics.str());
}

struct EmulateArgs {
  double t0 = 0.0;
  std::size_t members = 8, horizon = 500;
  int threads = 1;
};

inline void cmd_emulate(const RunConfig& c, const fs::path& out, const std::string& model_path,
                        const std::string& record_path, const EmulateArgs& a) {
  const auto m = data::load_model(model_path);
  const auto rec = data::read_record(record_path);
  if (rec.ny != m.ny()) throw ConfigError("record ny does not match the model");
  const std::size_t row = detail::row_at(rec, a.t0);
  const auto hist = detail::history_rows(rec, row, m.history());
  model::RolloutOptions opt;
  opt.threads = a.threads;
  opt.strict = false;
  const auto fc = model::ensemble_rollout(m, hist, a.horizon, a.members, c.seed, opt);
  const json meta{{"t0", a.t0}, {"t0_row", row}, {"record_interval", rec.record_interval}};
  const auto bytes = data::encode(data::to_container(fc, c.seed, meta));
  if (fc.diverged_count() > 0) {
    data::write_file(out / "forecast.sltd.partial", bytes);
    for (std::size_t i = 0; i < fc.members; ++i)
      if (fc.diverged_step[i] >= 0) throw RolloutDiverged(long(i), fc.diverged_step[i]);
  }
  data::write_file(out / "forecast.sltd", bytes);
}

inline void cmd_evaluate(const RunConfig& c, const fs::path& out, const std::string& forecast_path,
                         const std::string& record_path) {
  const auto fcont = data::load(forecast_path);
  const auto fc = data::forecast_from(fcont, forecast_path);
  const auto rec = data::read_record(record_path);
  if (rec.ny != fc.ny) throw ConfigError("record ny does not match the forecast");
  std::size_t t0_row = 0;
  try {
    t0_row = fcont.meta.at("t0_row").get<std::size_t>();
  } catch (const json::exception&) {
    throw CorruptHeader(forecast_path + ": forecast has no t0_row");
  }
  if (t0_row >= rec.rows()) throw ConfigError("forecast t0 lies outside the record");
  const double dt = rec.record_interval;

  // Skill over the steps the record covers.
  const std::size_t steps = std::min(fc.horizon, rec.rows() - 1 - t0_row);
  if (steps > 0) {
    model::EnsembleForecast head = fc;
    head.horizon = steps;
    head.U.clear();
    for (std::size_t m = 0; m < fc.members; ++m)
      for (std::size_t t = 0; t < steps; ++t) head.U.insert(head.U.end(), fc.row(m, t).begin(), fc.row(m, t).end());
    const std::span<const double> truth(rec.U.data() + (t0_row + 1) * rec.ny, steps * rec.ny);
    const auto s = diagnostics::crps_decomposition_series(head, truth);
    detail::write_csv(out / "crps.csv", [&](std::ostream& o) {
      o << "step,mae,variation,crps\n";
      o.precision(17);
      for (std::size_t t = 0; t < steps; ++t) o << t + 1 << ',' << s.mae[t] << ',' << s.variation[t] << ',' << s.crps(t) << '\n';
    });
  }

  // Long-run statistics: whole record against all members.
  diagnostics::FieldSamples ref, emu;
  ref.append(rec.U, rec.ny, dt);
  for (std::size_t m = 0; m < fc.members; ++m)
    if (fc.horizon >= 2) emu.append(std::span(fc.U).subspan(m * fc.horizon * fc.ny, fc.horizon * fc.ny), fc.ny, dt);
  const auto grid = diagnostics::PdfGrid::from(ref, c.diagnostics.bins);
  const auto pr = diagnostics::build_pdfs(ref, grid);
  const bool have_emu = !emu.U.empty();
  const auto pe = have_emu ? diagnostics::build_pdfs(emu, grid) : diagnostics::PdfSet{};
  const std::array<const char*, 3> single{"U", "dUdy", "dUdt"};
  const std::array<const char*, 3> pair{"U_dUdy", "U_dUdt", "dUdy_dUdt"};
  std::ostringstream hel;
  hel << "pdf,hellinger\n";
  hel.precision(17);
  auto emit = [&](const std::string& name, const diagnostics::HistogramPDF& r, const diagnostics::HistogramPDF* e) {
    detail::write_csv(out / ("pdf_truth_" + name + ".csv"), [&](std::ostream& o) { diagnostics::pdf_csv(r, o); });
    if (!e) return;
    detail::write_csv(out / ("pdf_emulator_" + name + ".csv"), [&](std::ostream& o) { diagnostics::pdf_csv(*e, o); });
    hel << name << ',' << diagnostics::hellinger(*e, r) << '\n';
  };
  for (std::size_t d = 0; d < 3; ++d) emit(single[d], pr.single[d], have_emu ? &pe.single[d] : nullptr);
  for (std::size_t d = 0; d < 3; ++d) emit(pair[d], pr.pair[d], have_emu ? &pe.pair[d] : nullptr);
  emit("U_dUdy_dUdt", pr.joint, have_emu ? &pe.joint : nullptr);
  if (have_emu) detail::write_text(out / "hellinger.csv", hel.str());

  const auto psd_truth = diagnostics::psd_time_avg(rec.U, rec.ny);
  const auto psd_emu = diagnostics::psd_time_avg(fc.U, fc.ny);
  detail::write_csv(out / "psd.csv", [&](std::ostream& o) {
    o << "k,truth,emulator\n";
    o.precision(17);
    for (std::size_t k = 0; k < psd_truth.size(); ++k) o << k << ',' << psd_truth[k] << ',' << psd_emu[k] << '\n';
  });

  auto transitions = [&](std::ostream& o, const char* source, const diagnostics::TransitionPDF& p) {
    for (std::size_t n = 0; n < p.freq.size(); ++n)
      o << source << ',' << n << ',' << p.freq[n][0] << ',' << p.freq[n][1] << ',' << p.freq[n][2] << '\n';
  };
  detail::write_csv(out / "transitions.csv", [&](std::ostream& o) {
    o << "source,count,decrease,same,increase\n";
    o.precision(17);
    transitions(o, "truth", diagnostics::transition_pdf(diagnostics::jet_counts(rec.U, rec.ny)));
    // Pool member transitions; pairs never straddle two members.
    int max_count = 0;
    std::vector<std::array<double, 3>> freq;
    std::size_t pairs = 0;
    for (std::size_t m = 0; m < fc.members && fc.horizon >= 2; ++m) {
      const auto counts = diagnostics::jet_counts(std::span(fc.U).subspan(m * fc.horizon * fc.ny, fc.horizon * fc.ny), fc.ny);
      const auto p = diagnostics::transition_pdf(counts);
      max_count = std::max(max_count, p.max_count);
      freq.resize(std::size_t(max_count) + 1, {0.0, 0.0, 0.0});
      for (std::size_t n = 0; n < p.freq.size(); ++n)
        for (int k = 0; k < 3; ++k) freq[n][std::size_t(k)] += p.freq[n][std::size_t(k)] * double(counts.size() - 1);
      pairs += counts.size() - 1;
    }
    if (pairs > 0) {
      diagnostics::TransitionPDF p;
      p.max_count = max_count;
      p.freq = freq;
      for (auto& r : p.freq)
        for (auto& v : r) v /= double(pairs);
      transitions(o, "emulator", p);
    }
  });
}

struct EventsArgs {
  std::string event = "coalescence";
  std::size_t lead = 50, members = 64, horizon = 0;  // horizon 0: 3 x lead
  int threads = 1;
};

inline void cmd_events(const RunConfig& c, const fs::path& out, const std::string& model_path,
                       const std::string& record_path, const EventsArgs& a) {
  const auto kind = a.event == "coalescence"  ? diagnostics::EventKind::coalescence
                    : a.event == "nucleation" ? diagnostics::EventKind::nucleation
                                              : throw ConfigError("--event must be coalescence or nucleation");
  if (a.lead < 1) throw ConfigError("--lead must be >= 1");
  const auto m = data::load_model(model_path);
  const auto rec = data::read_record(record_path);
  if (rec.ny != m.ny()) throw ConfigError("record ny does not match the model");
  const auto counts = diagnostics::jet_counts(rec.U, rec.ny);
  const auto steps = std::size_t(std::llround(double(a.lead) / rec.record_interval));
  std::optional<diagnostics::JetEvent> target;
  for (const auto& e : diagnostics::detect_events(counts, c.diagnostics.persistence))
    if (e.kind() == kind && e.index >= steps + m.history() - 1) {
      target = e;
      break;
    }
  if (!target) throw ConfigError("record has no " + a.event + " event at least " + std::to_string(a.lead) + " units in");
  const std::size_t t0_row = target->index - steps;
  const std::size_t horizon = a.horizon ? a.horizon : 3 * steps;
  model::RolloutOptions opt;
  opt.threads = a.threads;
  const auto fc = model::ensemble_rollout(m, detail::history_rows(rec, t0_row, m.history()), horizon, a.members,
                                          c.seed, opt);
  const auto pdf = diagnostics::time_to_event_pdf(fc, rec.row(t0_row), kind, c.diagnostics.persistence,
                                                  rec.record_interval);
  detail::write_csv(out / "event_pdf.csv", [&](std::ostream& o) { diagnostics::event_pdf_csv(pdf, o); });
  detail::write_csv(out / "event_quantiles.csv", [&](std::ostream& o) { diagnostics::event_quantiles_csv(pdf, o); });
  const json info{{"event", a.event},
                  {"lead", a.lead},
                  {"t0", rec.times[t0_row]},
                  {"t0_row", t0_row},
                  {"truth_event_time", rec.times[target->index]},
                  {"truth_jets_before", target->from},
                  {"truth_jets_after", target->to},
                  {"members", a.members},
                  {"horizon", horizon}};
  detail::write_text(out / "event.json", info.dump(2) + "\n");
}

// ---- entry point ----------------------------------------------------------

inline int run_cli(std::vector<std::string> args, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Stochastic latent transformer: simulate, train, emulate and diagnose beta-plane jets"};
  app.require_subcommand(1);
  std::string config_path, out_dir = ".", record, model_path, forecast;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  SimulateArgs sim;
  EmulateArgs emu;
  EventsArgs ev;

  auto common = [&](CLI::App* s, bool stochastic) {
    s->add_option("--config", config_path, "RunConfig JSON file");
    s->add_option("--set", sets, "Override a config value, e.g. --set train.epochs=10");
    s->add_option("--out", out_dir, "Output directory (created if missing)");
    auto* o = s->add_option("--seed", seed, "Random seed");
    if (stochastic) o->required();
  };
  auto* simulate = app.add_subcommand("simulate", "Run the solver and record U(y, t)");
  common(simulate, true);
  simulate->add_flag("--checkpoint", sim.checkpoint, "Also write the final vorticity spectrum");
  auto* dataset = app.add_subcommand("dataset", "Split a record and attach normalization statistics");
  common(dataset, false);
  dataset->add_option("--record", record, "Input record");
  auto* train = app.add_subcommand("train", "Train a model on a record");
  common(train, true);
  train->add_option("--record", record, "Input record or dataset");
  auto* emulate = app.add_subcommand("emulate", "Ensemble forecast from a recorded history");
  common(emulate, true);
  emulate->add_option("--model", model_path, "Model checkpoint");
  emulate->add_option("--record", record, "Record supplying the history");
  emulate->add_option("--t0", emu.t0, "Time of the last history row")->required();
  emulate->add_option("--members", emu.members, "Ensemble size");
  emulate->add_option("--horizon", emu.horizon, "Forecast steps");
  emulate->add_option("--threads", emu.threads, "Worker threads (wall time only)");
  auto* evaluate = app.add_subcommand("evaluate", "CRPS, PDFs, spectra and jet transitions of a forecast");
  common(evaluate, false);
  evaluate->add_option("--forecast", forecast, "Forecast file");
  evaluate->add_option("--record", record, "Reference record");
  auto* events = app.add_subcommand("events", "Time-to-event PDF before a recorded jet transition");
  common(events, true);
  events->add_option("--model", model_path, "Model checkpoint");
  events->add_option("--record", record, "Record containing the event");
  events->add_option("--event", ev.event, "coalescence or nucleation")->check(CLI::IsMember({"coalescence", "nucleation"}));
  events->add_option("--lead", ev.lead, "Forecast start, in time units before the event");
  events->add_option("--members", ev.members, "Ensemble size");
  events->add_option("--horizon", ev.horizon, "Forecast steps (default 3 x lead)");
  events->add_option("--threads", ev.threads, "Worker threads (wall time only)");

  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    log << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    log << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << error_line("config", 2, e.what()) << '\n';
    return 2;
  }

  try {
    auto cfg = resolve_config(config_path, sets);
    if (seed) {
      cfg.seed = *seed;
      cfg.solver.seed = *seed;
      cfg.train.seed = *seed;
      cfg.model.init_seed = *seed;
    }
    const fs::path out(out_dir);
    fs::create_directories(out);
    const auto* sub = app.get_subcommands().front();
    detail::write_config(out, cfg);
    if (sub == simulate) {
      cmd_simulate(cfg, out, sim, log);
    } else if (sub == dataset) {
      cmd_dataset(cfg, out, detail::first_nonempty(record, cfg.paths.record, "record"));
    } else if (sub == train) {
      cmd_train(cfg, out, detail::first_nonempty(record, cfg.paths.record, "record"), log);
    } else if (sub == emulate) {
      cmd_emulate(cfg, out, detail::first_nonempty(model_path, cfg.paths.model, "model"),
                  detail::first_nonempty(record, cfg.paths.record, "record"), emu);
    } else if (sub == evaluate) {
      cmd_evaluate(cfg, out, detail::first_nonempty(forecast, cfg.paths.forecast, "forecast"),
                   detail::first_nonempty(record, cfg.paths.record, "record"));
    } else {
      cmd_events(cfg, out, detail::first_nonempty(model_path, cfg.paths.model, "model"),
                 detail::first_nonempty(record, cfg.paths.record, "record"), ev);
    }
  } catch (const ConfigError& e) {
    err << error_line("config", 2, e.what()) << '\n';
    return 2;
  } catch (const ShapeError& e) {
    err << error_line("config", 2, e.what()) << '\n';
    return 2;
  } catch (const DegeneratePhase& e) {
    err << error_line("divergence", 3, e.what()) << '\n';
    return 3;
  } catch (const DivergenceError& e) {
    err << error_line("divergence", 3, e.what()) << '\n';
    return 3;
  } catch (const IoError& e) {
    err << error_line("io", 4, e.what()) << '\n';
    return 4;
  } catch (const fs::filesystem_error& e) {
    err << error_line("io", 4, e.what()) << '\n';
    return 4;
  } catch (const std::exception& e) {
    err << error_line("internal", 1, e.what()) << '\n';
    return 1;
  }
  return 0;
}

}  // namespace slt::cli
