#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "obed/filter.hpp"
#include "obed/runner.hpp"

namespace obed {

/// Shortest round-trip decimal representation; keeps CSV output
/// byte-reproducible for a fixed seed.
inline std::string format_double(double v) {
  char buf[32];
  const std::to_chars_result r = std::to_chars(buf, buf + sizeof buf, v);
  if (r.ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, r.ptr);
}

namespace detail {

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  return out;
}

}  // namespace detail

/// Per-epoch trace of a batch as one aggregated CSV. Columns:
/// run,epoch,<settings...>,y,{mean,std,entropy}_<param>...,resampled,
/// t_model_us,t_stat_us,t_update_us. Epochs are 1-based. t_stat_us covers
/// the design statistic, entropy estimation and argmax; t_update_us covers
/// the Bayes update and any resampling.
inline void write_epochs_csv(const std::string& path, std::span<const RunRecord> records,
                             std::span<const std::string> param_names,
                             std::span<const std::string> setting_names) {
  std::ofstream out = detail::open_output(path);
  out << "run,epoch";
  for (const std::string& s : setting_names) out << ',' << s;
  out << ",y";
  for (const std::string& p : param_names) {
    out << ",mean_" << p << ",std_" << p << ",entropy_" << p;
  }
  out << ",resampled,t_model_us,t_stat_us,t_update_us\n";

  for (const RunRecord& rec : records) {
    const std::size_t d = rec.param_dim;
    const std::size_t sd = rec.setting_dim;
    for (std::size_t e = 0; e < rec.epochs_completed; ++e) {
      out << rec.run_index << ',' << (e + 1);
      for (std::size_t k = 0; k < sd; ++k) out << ',' << format_double(rec.settings[e * sd + k]);
      out << ',' << format_double(rec.y[e]);
      for (std::size_t k = 0; k < d; ++k) {
        out << ',' << format_double(rec.post_mean[e * d + k]) << ','
            << format_double(rec.post_std[e * d + k]) << ','
            << format_double(rec.post_entropy[e * d + k]);
      }
      const EpochTimings& t = rec.timings[e];
      out << ',' << int(rec.resampled[e]) << ',' << t.design_model_us << ','
          << (t.design_statistic_us + t.design_entropy_us + t.design_select_us) << ','
          << (t.bayes_us + t.resample_us) << '\n';
    }
  }
}

inline nlohmann::json timing_json(const TimingAggregate& t) {
  return nlohmann::json{
      {"design", nlohmann::json{{"model_eval_us", t.model_eval_us},
                                {"statistic_us", t.statistic_us},
                                {"entropy_us", t.entropy_us},
                                {"argmax_us", t.select_us},
                                {"total_us", t.design_total_us}}},
      {"analysis",
       nlohmann::json{{"bayes_update_us", t.bayes_us}, {"resample_us", t.resample_us}}},
      {"metrics", nlohmann::json{{"summary_us", t.summary_us}}},
  };
}

/// Batch summary as JSON: per-epoch aggregate tables plus run/timing
/// bookkeeping. `meta` carries the caller's configuration echo.
inline nlohmann::json batch_summary_json(const BatchSummary& s,
                                         std::span<const std::string> param_names,
                                         nlohmann::json meta = {}) {
  auto per_epoch = [&](const std::vector<double>& flat) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t e = 0; e < s.n_epochs && (e + 1) * s.param_dim <= flat.size(); ++e) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t k = 0; k < s.param_dim; ++k) row.push_back(flat[e * s.param_dim + k]);
      rows.push_back(std::move(row));
    }
    return rows;
  };
  auto final_row = [&](const std::vector<double>& flat) {
    nlohmann::json row = nlohmann::json::array();
    if (!flat.empty()) {
      for (std::size_t k = 0; k < s.param_dim; ++k)
        row.push_back(flat[(s.n_epochs - 1) * s.param_dim + k]);
    }
    return row;
  };

  nlohmann::json j{
      {"meta", std::move(meta)},
      {"n_runs", s.n_runs},
      {"n_completed", s.n_completed},
      {"n_failed", s.n_failed},
      {"n_epochs", s.n_epochs},
      {"param_names", std::vector<std::string>(param_names.begin(), param_names.end())},
      {"per_epoch",
       nlohmann::json{{"std_mean", per_epoch(s.std_mean)},
                      {"std_q05", per_epoch(s.std_q05)},
                      {"std_q95", per_epoch(s.std_q95)},
                      {"entropy_mean", per_epoch(s.entropy_mean)},
                      {"entropy_q05", per_epoch(s.entropy_q05)},
                      {"entropy_q95", per_epoch(s.entropy_q95)},
                      {"rms_error", per_epoch(s.rms_error)}}},
      {"final", nlohmann::json{{"std_mean", final_row(s.std_mean)},
                               {"rms_error", final_row(s.rms_error)}}},
      {"timing_us_per_run", timing_json(s.timing)},
  };
  return j;
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out = detail::open_output(path);
  out << j.dump(2) << '\n';
}

/// Long-format per-epoch aggregate table for several algorithms.
inline void write_compare_summary_csv(
    const std::string& path,
    std::span<const std::pair<std::string, const BatchSummary*>> batches,
    std::span<const std::string> param_names) {
  std::ofstream out = detail::open_output(path);
  out << "algorithm,epoch,param,std_mean,std_q05,std_q95,entropy_mean,entropy_q05,entropy_q95,"
         "rms_error\n";
  for (const auto& [label, s] : batches) {
    for (std::size_t e = 0; e < s->n_epochs; ++e) {
      for (std::size_t k = 0; k < s->param_dim; ++k) {
        const std::size_t cell = e * s->param_dim + k;
        if (cell >= s->std_mean.size()) continue;
        out << label << ',' << (e + 1) << ',' << param_names[k] << ','
            << format_double(s->std_mean[cell]) << ',' << format_double(s->std_q05[cell]) << ','
            << format_double(s->std_q95[cell]) << ',' << format_double(s->entropy_mean[cell])
            << ',' << format_double(s->entropy_q05[cell]) << ','
            << format_double(s->entropy_q95[cell]) << ',' << format_double(s->rms_error[cell])
            << '\n';
      }
    }
  }
}

/// Design-time decomposition per algorithm, per-run means in microseconds.
inline void write_compare_timing_csv(
    const std::string& path,
    std::span<const std::pair<std::string, const BatchSummary*>> batches) {
  std::ofstream out = detail::open_output(path);
  out << "algorithm,subtask,mean_us_per_run,mean_us_per_epoch\n";
  for (const auto& [label, s] : batches) {
    const double epochs = static_cast<double>(std::max<std::size_t>(s->n_epochs, 1));
    const std::pair<const char*, double> rows[] = {
        {"model_eval", s->timing.model_eval_us}, {"statistic", s->timing.statistic_us},
        {"entropy", s->timing.entropy_us},       {"argmax", s->timing.select_us},
        {"design_total", s->timing.design_total_us},
        {"bayes_update", s->timing.bayes_us},    {"resample", s->timing.resample_us},
        {"summary", s->timing.summary_us},
    };
    for (const auto& [task, us] : rows) {
      out << label << ',' << task << ',' << format_double(us) << ','
          << format_double(us / epochs) << '\n';
    }
  }
}

/// Chosen-settings trace per algorithm (design-choice patterns).
inline void write_compare_settings_csv(
    const std::string& path,
    std::span<const std::pair<std::string, const std::vector<RunRecord>*>> batches,
    std::span<const std::string> setting_names) {
  std::ofstream out = detail::open_output(path);
  out << "algorithm,run,epoch";
  for (const std::string& s : setting_names) out << ',' << s;
  out << '\n';
  for (const auto& [label, records] : batches) {
    for (const RunRecord& rec : *records) {
      for (std::size_t e = 0; e < rec.epochs_completed; ++e) {
        out << label << ',' << rec.run_index << ',' << (e + 1);
        for (std::size_t k = 0; k < rec.setting_dim; ++k)
          out << ',' << format_double(rec.settings[e * rec.setting_dim + k]);
        out << '\n';
      }
    }
  }
}

/// Particle-filter snapshot for reproducibility debugging.
inline nlohmann::json filter_snapshot_json(const ParticleFilter& pf) {
  return nlohmann::json{
      {"param_dim", pf.param_dim()},
      {"particles", std::vector<double>(pf.particles_flat().begin(), pf.particles_flat().end())},
      {"weights", std::vector<double>(pf.weights().begin(), pf.weights().end())},
      {"rng_state", pf.rng().state_string()},
      {"options", nlohmann::json{{"resample_threshold_ratio", pf.options().resample_threshold_ratio},
                                 {"jitter_alpha", pf.options().jitter_alpha}}},
  };
}

inline ParticleFilter filter_from_snapshot(const nlohmann::json& j) {
  FilterOptions opts;
  opts.resample_threshold_ratio = j.at("options").at("resample_threshold_ratio").get<double>();
  opts.jitter_alpha = j.at("options").at("jitter_alpha").get<double>();
  Rng rng;
  rng.set_state_string(j.at("rng_state").get<std::string>());
  return ParticleFilter::from_state(j.at("particles").get<std::vector<double>>(),
                                    j.at("weights").get<std::vector<double>>(),
                                    j.at("param_dim").get<std::size_t>(), rng, opts);
}

}  // namespace obed
