#pragma once

#include <zlib.h>

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hydro_embed/checkpoint.hpp"
#include "hydro_embed/config.hpp"
#include "hydro_embed/error.hpp"
#include "hydro_embed/eval.hpp"
#include "hydro_embed/ingest.hpp"
#include "hydro_embed/parallel.hpp"
#include "hydro_embed/synth.hpp"
#include "hydro_embed/train.hpp"

namespace hydro_embed::cli {

enum ExitCode : int { kOk = 0, kIoError = 1, kUsageError = 2, kDiverged = 3 };

inline int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidSplit:
    case ErrorCode::InvalidDate:
    case ErrorCode::IncompatibleCheckpoint:
    case ErrorCode::VersionMismatch:
    case ErrorCode::CorruptFile:
      return kUsageError;
    case ErrorCode::NonFiniteActivation:
      return kDiverged;
    default:
      return kIoError;
  }
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// CRC32 over attributes.csv and the forcing/discharge files of `ids`, in
/// id order.
inline std::string data_fingerprint(const std::filesystem::path& root, const std::vector<std::string>& ids) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  auto feed = [&](const std::filesystem::path& p) {
    const std::string bytes = detail::read_file(p);
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  };
  feed(root / "attributes.csv");
  for (const auto& id : ids) {
    feed(root / "forcing" / (id + ".txt"));
    feed(root / "discharge" / (id + ".txt"));
  }
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

inline std::string manifest_text(const TrainConfig& cfg, const std::string& fingerprint, const std::string& start,
                                 const std::string& end) {
  std::ostringstream out;
  out << "# hydro-embed run manifest; usable as --config to reproduce the run\n";
  out << "toolkit_version = " << kToolkitVersion << '\n';
  out << "start_time = " << start << '\n';
  out << "end_time = " << end << '\n';
  out << "data_fingerprint = " << fingerprint << '\n';
  out << serialize_config(cfg);
  return out.str();
}

inline std::string loss_log_csv(const std::vector<double>& log) {
  std::string out = "epoch,mean_train_loss\n";
  for (std::size_t i = 0; i < log.size(); ++i) out += std::to_string(i + 1) + ',' + detail::format_real(log[i]) + '\n';
  return out;
}

inline std::string epoch_checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03d.ckpt", epoch);
  return buf;
}

struct SynthArgs {
  int basins = 0;
  int days = 0;
  std::uint64_t seed = 0;
  std::string out;
  bool shared_forcing = true;
  std::string start = "2001-10-01";
};

inline int cmd_synth(const SynthArgs& a) {
  SynthFixture fx = make_fixture(a.basins, a.days, a.seed, a.shared_forcing);
  fx.start = parse_iso_date(a.start);
  emit_fixture(fx, a.out);
  detail::write_text(std::filesystem::path(a.out) / "synth_specs.csv", specs_csv(fx));
  std::cout << "wrote " << a.basins << " basins x " << a.days << " days to " << a.out << '\n';
  return kOk;
}

struct TrainArgs {
  std::string config;
  std::vector<std::pair<std::string, std::string>> overrides;  // config key, value
  std::string resume;
};

inline int cmd_train(const TrainArgs& a) {
  TrainConfig cfg;
  if (!a.config.empty()) cfg = load_config(a.config);
  for (const auto& [k, v] : a.overrides) set_config_value(cfg, k, v);
  cfg.validate();

  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) {
    try {
      resume = load_checkpoint(a.resume);
    } catch (const Error& e) {
      throw Error(ErrorCode::InvalidConfig, std::string("cannot resume: ") + e.what());
    }
  }

  const auto records = load_collection(cfg.data_root);
  std::vector<std::string> ids;
  for (const auto& r : records) ids.push_back(r.basin_id);
  const std::string fingerprint = data_fingerprint(cfg.data_root, ids);

  std::error_code ec;
  std::filesystem::create_directories(cfg.checkpoint_dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + cfg.checkpoint_dir.string());
  const std::string started = utc_timestamp();
  const auto manifest_path = cfg.checkpoint_dir / "manifest.txt";
  detail::write_text(manifest_path, manifest_text(cfg, fingerprint, started, ""));

  TrainOptions opts;
  opts.threads = threads_from_env();
  opts.resume = std::move(resume);
  opts.on_epoch = [&](const Checkpoint& ck) {
    save_checkpoint(cfg.checkpoint_dir / epoch_checkpoint_name(ck.epoch), ck);
    save_checkpoint(cfg.checkpoint_dir / "model.ckpt", ck);
    detail::write_text(cfg.checkpoint_dir / "loss_log.csv", loss_log_csv(ck.loss_log));
    std::cout << "epoch " << ck.epoch << "/" << cfg.epochs << " mean_train_loss " << ck.loss_log.back() << '\n';
  };
  const TrainResult result = train_run(records, cfg, opts);
  save_checkpoint(cfg.checkpoint_dir / "model.ckpt", result.checkpoint);
  detail::write_text(cfg.checkpoint_dir / "loss_log.csv", loss_log_csv(result.checkpoint.loss_log));
  detail::write_text(manifest_path, manifest_text(cfg, fingerprint, started, utc_timestamp()));
  return kOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::string format;  // empty: both
  std::string label;
};

inline int cmd_eval(const EvalArgs& a) {
  Checkpoint ck;
  try {
    ck = load_checkpoint(a.checkpoint);
  } catch (const Error& e) {
    throw Error(ErrorCode::IncompatibleCheckpoint, e.what());
  }
  std::vector<SkippedBasin> load_skips;
  const auto records = load_collection(a.data, std::nullopt, &load_skips, ck.lookback + 1);
  EvalReport report = evaluate(records, ck, std::nullopt, threads_from_env());
  report.skipped_basins.insert(report.skipped_basins.begin(), load_skips.begin(), load_skips.end());

  std::error_code ec;
  std::filesystem::create_directories(a.out, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + a.out);
  const std::string label = a.label.empty() ? to_string(ck.mode) : a.label;
  const std::filesystem::path out(a.out);
  if (a.format.empty() || a.format == "csv") write_report(report, out / "report.csv", ReportFormat::Csv);
  if (a.format.empty() || a.format == "table") write_report(report, out / "table.txt", ReportFormat::Table, label);
  const TableRow row = table_row(label, report);
  std::cout << format_table(std::span(&row, 1));
  for (const auto& s : report.skipped_basins) std::cerr << "skipped " << s.basin_id << ": " << s.reason << '\n';
  return kOk;
}

struct CompareArgs {
  std::vector<std::string> reports;
  std::vector<std::string> labels;
  std::string out;
};

inline int cmd_compare(const CompareArgs& a) {
  if (!a.labels.empty() && a.labels.size() != a.reports.size()) {
    throw Error(ErrorCode::InvalidConfig, std::to_string(a.reports.size()) + " reports but " +
                                              std::to_string(a.labels.size()) + " labels");
  }
  std::vector<TableRow> rows;
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    const std::string label = a.labels.empty() ? std::filesystem::path(a.reports[i]).parent_path().filename().string() : a.labels[i];
    rows.push_back(table_row(label, read_report(a.reports[i])));
  }
  const std::string table = format_table(rows);
  std::cout << table;
  if (!a.out.empty()) detail::write_text(a.out, table);
  return kOk;
}

/// Entry point shared by the executable and the tests. Returns the process
/// exit code: 0 ok, 1 I/O or data error, 2 usage or config error,
/// 3 training divergence.
inline int run(std::vector<std::string> args) {
  CLI::App app{"Joint rainfall-runoff LSTM with learned per-basin embeddings", "hydro-embed"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic linear-reservoir fixture");
  synth_cmd->add_option("--basins", synth.basins, "Number of basins")->required()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--days", synth.days, "Days per basin")->required()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth.seed, "Fixture seed");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--start", synth.start, "First date (YYYY-MM-DD)");
  synth_cmd->add_flag("--shared-forcing,!--independent-forcing", synth.shared_forcing,
                      "All basins share one forcing series (default)");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train one model variant");
  train_cmd->add_option("--config", train.config, "key = value config file")->check(CLI::ExistingFile);
  train_cmd->add_option("--resume", train.resume, "Continue from a checkpoint of the same run");
  const std::vector<std::pair<std::string, std::string>> override_keys = {
      {"--data", "data_root"},         {"--mode", "mode"},
      {"--seed", "seed"},              {"--epochs", "epochs"},
      {"--lr", "lr"},                  {"--batch-size", "batch_size"},
      {"--lookback", "lookback"},      {"--hidden-size", "hidden_size"},
      {"--embedding-dim", "embedding_dim"}, {"--dropout", "dropout"},
      {"--epsilon", "epsilon"},        {"--clip-norm", "clip_norm"},
      {"--beta1", "beta1"},            {"--beta2", "beta2"},
      {"--adam-eps", "adam_eps"},      {"--train-start", "train_start"},
      {"--train-end", "train_end"},    {"--eval-start", "eval_start"},
      {"--eval-end", "eval_end"},      {"--checkpoint-dir", "checkpoint_dir"},
  };
  std::vector<std::string> override_values(override_keys.size());
  std::vector<CLI::Option*> override_opts;
  for (std::size_t i = 0; i < override_keys.size(); ++i) {
    override_opts.push_back(train_cmd->add_option(override_keys[i].first, override_values[i],
                                                  "Override config key " + override_keys[i].second));
  }

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a basin collection");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval.data, "Data root")->required();
  eval_cmd->add_option("--out", eval.out, "Output directory")->required();
  eval_cmd->add_option("--format", eval.format, "csv or table (default: both)")->check(CLI::IsMember({"csv", "table"}));
  eval_cmd->add_option("--label", eval.label, "Row label for the text table");

  CompareArgs compare;
  auto* compare_cmd = app.add_subcommand("compare", "Tabulate several evaluation reports");
  compare_cmd->add_option("--reports", compare.reports, "report.csv files")->required();
  compare_cmd->add_option("--labels", compare.labels, "One label per report");
  compare_cmd->add_option("--out", compare.out, "Also write the table here");

  std::vector<const char*> argv;
  argv.push_back("hydro-embed");
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsageError;
  }

  try {
    if (*synth_cmd) return cmd_synth(synth);
    if (*train_cmd) {
      for (std::size_t i = 0; i < override_keys.size(); ++i) {
        if (override_opts[i]->count() > 0) train.overrides.emplace_back(override_keys[i].second, override_values[i]);
      }
      return cmd_train(train);
    }
    if (*eval_cmd) return cmd_eval(eval);
    if (*compare_cmd) return cmd_compare(compare);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIoError;
  }
  return kUsageError;
}

inline int run(int argc, char** argv) { return run(std::vector<std::string>(argv + 1, argv + argc)); }

}  // namespace hydro_embed::cli
