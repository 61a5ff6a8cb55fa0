#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cyclereg/errors.hpp"
#include "cyclereg/evaluation.hpp"
#include "cyclereg/gradcheck.hpp"
#include "cyclereg/io.hpp"
#include "cyclereg/transfer.hpp"

namespace fs = std::filesystem;
using namespace cyclereg;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerics = 3;

struct PairArgs {
  std::string atlas;
  std::string atlas_labels;
  std::string target;
  std::string config;
};

void add_pair_options(CLI::App* cmd, PairArgs& a) {
  cmd->add_option("--atlas", a.atlas, "atlas image volume")->required();
  cmd->add_option("--atlas-labels", a.atlas_labels, "atlas label volume")->required();
  cmd->add_option("--target", a.target, "target image volume")->required();
  cmd->add_option("--config", a.config, "run configuration JSON")->required();
}

SolveConfig load_config(const std::string& path, const std::optional<std::uint64_t>& seed) {
  SolveConfig c = io::load_run_config(path);
  if (seed) c.seed = *seed;
  return c;
}

// Stem plus suffix, keeping the directory: "out/seg" + "_fF" -> "out/seg_fF".
fs::path sibling(const fs::path& stem, const std::string& suffix) {
  fs::path base = io::volume_files(stem).header;
  base.replace_extension();
  return base.parent_path() / (base.filename().string() + suffix);
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}

int run_register(const PairArgs& a, const std::string& out_dir,
                 const std::optional<std::uint64_t>& seed) {
  const SolveConfig cfg = load_config(a.config, seed);
  const ScalarVolume atlas = io::read_scalar(a.atlas);
  const LabelVolume labels = io::read_labels(a.atlas_labels);
  const ScalarVolume target = io::read_scalar(a.target);
  const SolveResult r = optimize_pair(atlas, labels, target, cfg);
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  io::write_field(dir / "fF", r.forward);
  io::write_field(dir / "fB", r.backward);
  io::write_text(dir / "trace.csv", io::trace_csv(r.trace));
  std::cout << "wrote " << (dir / "fF").string() << ", " << (dir / "fB").string() << ", "
            << (dir / "trace.csv").string() << "\n";
  return 0;
}

int run_segment(const PairArgs& a, const std::string& out,
                const std::optional<std::uint64_t>& seed) {
  const SolveConfig cfg = load_config(a.config, seed);
  const ScalarVolume atlas = io::read_scalar(a.atlas);
  const LabelVolume labels = io::read_labels(a.atlas_labels);
  const ScalarVolume target = io::read_scalar(a.target);
  const TransferResult r = transfer_labels(atlas, labels, target, cfg);
  const fs::path stem(out);
  ensure_parent(stem);
  io::write_labels(stem, r.segmentation);
  io::write_field(sibling(stem, "_fF"), r.forward);
  io::write_field(sibling(stem, "_fB"), r.backward);
  const fs::path report = sibling(stem, "_cycle.csv");
  io::write_text(report, io::cycle_report_csv(r.report));
  std::cout << "segmentation " << io::volume_files(stem).header.string() << " report "
            << report.string() << " ice_mean " << r.report.inverse_consistency.mean << "\n";
  return 0;
}

LabelVolume with_classes(const LabelVolume& v, int classes) {
  return LabelVolume(v.shape(), classes, std::vector<std::uint16_t>(v.ids().begin(), v.ids().end()));
}

int run_eval(const std::string& pred_path, const std::string& gt_path, int classes,
             const std::string& out) {
  if (classes < 2) throw ConfigError("--classes must be >= 2");
  const LabelVolume pred = with_classes(io::read_labels(pred_path), classes);
  const LabelVolume gt = with_classes(io::read_labels(gt_path), classes);
  const std::vector<double> dice = foreground_dice(pred, gt);
  std::string case_id = io::volume_files(pred_path).header.stem().string();
  std::vector<io::DiceRow> rows;
  for (std::size_t k = 0; k < dice.size(); ++k) {
    rows.push_back({case_id, static_cast<int>(k + 1), dice[k]});
  }
  const ScoreSummary summary = summarize_scores({dice});
  ensure_parent(out);
  io::write_text(out, io::dice_report_csv(rows, summary));
  std::cout << "mean_dice " << pct(summary.mean) << "\n";
  return 0;
}

int run_phantom_gen(const std::string& spec, const std::string& out_dir,
                    const std::optional<std::uint64_t>& seed) {
  io::PhantomJob job = io::load_phantom_job(spec);
  if (seed) {
    job.phantom.seed = *seed;
    job.deform.seed = *seed + 1000;
    job.target_noise_seed = *seed + 2000;
  }
  io::write_phantom_case(out_dir, job);
  std::cout << "wrote phantom case to " << out_dir << "\n";
  return 0;
}

int run_grad_check(int size, const std::optional<std::uint64_t>& seed) {
  GradCheckOptions o;
  o.size = size;
  if (seed) o.seed = *seed;
  constexpr double kTolerance = 1e-4;
  const std::vector<GradCheckResult> results = run_gradient_suite(o);
  bool ok = true;
  std::cout << "term,max_rel_error_fF,max_rel_error_fB,samples\n";
  for (const GradCheckResult& r : results) {
    std::cout << r.term << ',' << r.max_rel_error_forward << ',' << r.max_rel_error_backward
              << ',' << r.samples << "\n";
    ok = ok && r.max_rel_error() <= kTolerance;
  }
  if (!ok) {
    std::cerr << "error: numerics: gradient check exceeded relative error " << kTolerance << "\n";
    return kExitNumerics;
  }
  return 0;
}

struct AblationRow {
  const char* name;
  TermToggles toggles;
};

int run_ablate(const std::string& suite_dir, const std::string& config, const std::string& out,
               const std::optional<std::uint64_t>& seed) {
  const SolveConfig base = load_config(config, seed);
  std::vector<fs::path> cases;
  for (const auto& entry : fs::directory_iterator(suite_dir)) {
    if (entry.is_directory()) cases.push_back(entry.path());
  }
  std::sort(cases.begin(), cases.end());
  if (cases.empty()) throw ConfigError("no case directories under " + suite_dir);

  const std::vector<AblationRow> rows = {
      {"sim_smooth", TermToggles::none()},
      {"baseline", {true, false, false, false}},
      {"+trans", {true, true, false, false}},
      {"+anatomy_cyc", {true, false, true, false}},
      {"+trans+anatomy_cyc", {true, true, true, false}},
      {"+trans+anatomy_cyc+diff_cyc", {true, true, true, true}},
  };

  std::ostringstream table;
  table << "config,cyc,trans,anatomy_cyc,diff_cyc,mean,std,min,max,ice_mean\n";
  for (const AblationRow& row : rows) {
    SolveConfig cfg = base;
    cfg.weights.toggles = row.toggles;
    std::vector<std::vector<double>> dice;
    double ice = 0.0;
    for (const fs::path& c : cases) {
      const ScalarVolume atlas = io::read_scalar(c / "atlas");
      const LabelVolume labels = io::read_labels(c / "atlas_labels");
      const ScalarVolume target = io::read_scalar(c / "target");
      const LabelVolume gt = io::read_labels(c / "gt_labels");
      const TransferResult r = transfer_labels(atlas, labels, target, cfg);
      dice.push_back(foreground_dice(r.segmentation, gt));
      ice += r.report.inverse_consistency.mean;
    }
    const ScoreSummary s = summarize_scores(dice);
    char ice_buf[32];
    std::snprintf(ice_buf, sizeof ice_buf, "%.6f", ice / static_cast<double>(cases.size()));
    table << row.name << ',' << row.toggles.cyc << ',' << row.toggles.trans << ','
          << row.toggles.anatomy_cyc << ',' << row.toggles.diff_cyc << ',' << pct(s.mean) << ','
          << pct(s.std) << ',' << pct(s.min) << ',' << pct(s.max) << ',' << ice_buf << "\n";
    std::cout << row.name << " mean " << pct(s.mean) << " ice " << ice_buf << std::endl;
  }
  ensure_parent(out);
  io::write_text(out, table.str());
  return 0;
}

int fail(const char* kind, const std::string& what, int code) {
  std::string line = what;
  std::replace(line.begin(), line.end(), '\n', ' ');
  std::cerr << "error: " << kind << ": " << line << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cycle-consistent atlas label transfer"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed;

  PairArgs reg_args;
  std::string reg_out;
  auto* reg = app.add_subcommand("register", "solve forward and backward fields for a pair");
  add_pair_options(reg, reg_args);
  reg->add_option("--out-dir", reg_out, "output directory")->required();

  PairArgs seg_args;
  std::string seg_out;
  auto* seg = app.add_subcommand("segment", "transfer atlas labels onto the target");
  add_pair_options(seg, seg_args);
  seg->add_option("--out", seg_out, "segmentation output stem")->required();

  std::string pred, gt, eval_out;
  int classes = 0;
  auto* ev = app.add_subcommand("eval", "Dice report for a predicted segmentation");
  ev->add_option("--pred", pred, "predicted labels")->required();
  ev->add_option("--gt", gt, "ground-truth labels")->required();
  ev->add_option("--classes", classes, "number of classes K including background")->required();
  ev->add_option("--out", eval_out, "report CSV")->required();

  std::string spec, phantom_out;
  auto* ph = app.add_subcommand("phantom-gen", "write a synthetic atlas/target case");
  ph->add_option("--spec", spec, "phantom job JSON")->required();
  ph->add_option("--out-dir", phantom_out, "output directory")->required();

  int size = 6;
  auto* gc = app.add_subcommand("grad-check", "finite-difference gradient suite");
  gc->add_option("--size", size, "grid edge, 6 to 8");

  std::string suite, ablate_config, ablate_out;
  auto* ab = app.add_subcommand("ablate", "toggle matrix over a phantom suite");
  ab->add_option("--suite-dir", suite, "directory of phantom cases")->required();
  ab->add_option("--config", ablate_config, "base run configuration JSON")->required();
  ab->add_option("--out", ablate_out, "table CSV")->required();

  for (auto* cmd : {reg, seg, ev, ph, gc, ab}) {
    cmd->add_option("--seed", seed, "seed override");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), kExitConfig);
  }

  try {
    if (*reg) return run_register(reg_args, reg_out, seed);
    if (*seg) return run_segment(seg_args, seg_out, seed);
    if (*ev) return run_eval(pred, gt, classes, eval_out);
    if (*ph) return run_phantom_gen(spec, phantom_out, seed);
    if (*gc) return run_grad_check(size, seed);
    if (*ab) return run_ablate(suite, ablate_config, ablate_out, seed);
  } catch (const NumericsError& e) {
    return fail("numerics", e.what(), kExitNumerics);
  } catch (const FormatError& e) {
    return fail("format", e.what(), kExitConfig);
  } catch (const ConfigError& e) {
    return fail("config", e.what(), kExitConfig);
  } catch (const ShapeError& e) {
    return fail("shape", e.what(), kExitConfig);
  } catch (const PyramidTooCoarse& e) {
    return fail("config", e.what(), kExitConfig);
  } catch (const fs::filesystem_error& e) {
    return fail("io", e.what(), kExitConfig);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
