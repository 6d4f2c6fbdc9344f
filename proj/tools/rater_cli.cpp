// Command-line front end. Talks to the library only through rater.h.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "rater/rater.h"

namespace {

struct Global {
  std::uint64_t seed = 1;
  bool quiet = false;
  std::string out;
};

struct DataFlags {
  std::string format = "long";
  std::string missing = "NA";
  bool no_header = false;
  int categories = 0;
};

// Owns a string returned by the library.
struct OwnedString {
  char* ptr = nullptr;
  size_t length = 0;
  ~OwnedString() { rater_string_free(ptr); }
  std::string str() const { return ptr ? std::string(ptr) : std::string(); }
};

struct DatasetHandle {
  rater_dataset* ptr = nullptr;
  ~DatasetHandle() { rater_dataset_free(ptr); }
};

struct FitHandle {
  rater_fit* ptr = nullptr;
  ~FitHandle() { rater_fit_free(ptr); }
};

class Failure {
 public:
  explicit Failure(rater_status s) : status(s) {}
  rater_status status;
};

void check(rater_status s) {
  if (s != RATER_OK) throw Failure(s);
}

void emit(const Global& g, const std::string& text) {
  if (g.out.empty()) {
    std::fwrite(text.data(), 1, text.size(), stdout);
    return;
  }
  check(rater_write_file(g.out.c_str(), text.data(), text.size()));
}

void note(const Global& g, const std::string& text) {
  if (!g.quiet && !text.empty()) std::cerr << text;
}

void read_dataset(const std::string& path, const DataFlags& d, DatasetHandle& h) {
  rater_parse_options o;
  rater_parse_options_init(&o);
  o.has_header = d.no_header ? 0 : 1;
  o.missing_token = d.missing.c_str();
  o.categories = d.categories;
  check(rater_dataset_read(path.c_str(), d.format.c_str(), &o, &h.ptr));
}

void read_fit(const std::string& path, FitHandle& h) {
  OwnedString text;
  check(rater_read_file(path.c_str(), &text.ptr, &text.length));
  check(rater_fit_load(text.ptr, text.length, &h.ptr));
}

std::string read_text(const std::string& path) {
  OwnedString text;
  check(rater_read_file(path.c_str(), &text.ptr, &text.length));
  return std::string(text.ptr, text.length);
}

void add_data_flags(CLI::App* cmd, DataFlags& d, bool with_format = true) {
  if (with_format)
    cmd->add_option("--data-format", d.format, "long, wide or grouped")
        ->check(CLI::IsMember({"long", "wide", "grouped"}))
        ->capture_default_str();
  cmd->add_option("--missing", d.missing, "missing-value token")->capture_default_str();
  cmd->add_flag("--no-header", d.no_header, "the input has no header row");
  cmd->add_option("--categories", d.categories, "number of categories (default: largest rating)")
      ->check(CLI::NonNegativeNumber);
}

void progress_line(const char* line, void* user) {
  const auto* g = static_cast<const Global*>(user);
  if (!g->quiet) std::cerr << line << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian Dawid-Skene models for categorical rating data"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML or INI file of option values");
  app.set_version_flag("--version", rater_version());

  Global g;
  app.add_option("--seed", g.seed, "random seed")->capture_default_str();
  app.add_flag("--quiet", g.quiet, "suppress progress and warnings");
  app.add_option("--out", g.out, "output file (default: standard output)");

  // convert
  auto* convert = app.add_subcommand("convert", "convert between long, wide and grouped layouts");
  std::string convert_in, convert_to;
  DataFlags convert_data;
  convert->add_option("input", convert_in, "input CSV")->required();
  convert->add_option("--from", convert_data.format, "input layout")
      ->check(CLI::IsMember({"long", "wide", "grouped"}))
      ->capture_default_str();
  convert->add_option("--to", convert_to, "output layout")->check(CLI::IsMember({"long", "wide", "grouped"}))->required();
  add_data_flags(convert, convert_data, false);

  // fit
  auto* fit = app.add_subcommand("fit", "fit a model and write an archive");
  std::string fit_data;
  DataFlags fit_flags;
  std::string model = "dawid-skene", method = "mcmc", init = "from-majority-vote", beta_file;
  double tol = 0.0, target_accept = 0.8;
  int max_iter = 1000, chains = 4, warmup = 1000, draws = 1000, max_leapfrog = 1024;
  std::vector<double> alpha;
  std::optional<double> prior_n, prior_p;
  fit->add_option("data", fit_data, "rating data CSV")->required();
  add_data_flags(fit, fit_flags);
  fit->add_option("--model", model)
      ->check(CLI::IsMember({"dawid-skene", "class-conditional", "hierarchical", "homogeneous"}))
      ->capture_default_str();
  fit->add_option("--method", method)->check(CLI::IsMember({"mcmc", "optim"}))->capture_default_str();
  fit->add_option("--init", init, "optimisation start")
      ->check(CLI::IsMember({"uniform-diagonal", "jittered", "from-majority-vote"}))
      ->capture_default_str();
  fit->add_option("--tol", tol, "optimisation tolerance (default 1e-8 for EM, 1e-6 for L-BFGS)")
      ->check(CLI::PositiveNumber);
  fit->add_option("--max-iter", max_iter)->check(CLI::PositiveNumber)->capture_default_str();
  fit->add_option("--chains", chains)->check(CLI::PositiveNumber)->capture_default_str();
  fit->add_option("--warmup", warmup)->check(CLI::NonNegativeNumber)->capture_default_str();
  fit->add_option("--draws", draws)->check(CLI::PositiveNumber)->capture_default_str();
  fit->add_option("--target-accept", target_accept)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  fit->add_option("--max-leapfrog", max_leapfrog, "leapfrog steps per transition cap")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  fit->add_option("--alpha", alpha, "prevalence prior, K values")->delimiter(',');
  fit->add_option("--beta-file", beta_file, "K x K or stacked per-rater error-matrix prior CSV");
  fit->add_option("--prior-n", prior_n, "pseudo-count N of the default error prior");
  fit->add_option("--prior-p", prior_p, "assumed accuracy p of the default error prior");

  // summary
  auto* summary = app.add_subcommand("summary", "print an overview of a fit");
  std::string summary_archive, summary_data;
  DataFlags summary_flags;
  summary->add_option("archive", summary_archive)->required();
  summary->add_option("--data", summary_data, "refuse unless the fit was made from this file");
  add_data_flags(summary, summary_flags);

  // extract
  auto* extract = app.add_subcommand("extract", "write estimates, draws or criteria from a fit");
  std::string extract_archive, what;
  double level = 0.9;
  extract->add_option("archive", extract_archive)->required();
  extract->add_option("what", what)
      ->check(CLI::IsMember({"pi", "theta", "p", "z", "class-probs", "draws", "intervals", "waic"}))
      ->required();
  extract->add_option("--level", level, "credible-interval mass")->check(CLI::Range(0.0, 1.0))->capture_default_str();

  // plotdata
  auto* plot = app.add_subcommand("plotdata", "tidy tables for plotting");
  std::string plot_archive, kind;
  std::vector<long long> items;
  plot->add_option("archive", plot_archive)->required();
  plot->add_option("kind", kind)->required();
  plot->add_option("--items", items, "1-based items for latent-class")->delimiter(',');

  // simulate
  auto* simulate = app.add_subcommand("simulate", "simulate ratings for an item,rater design");
  std::string params_file, sim_archive, design_file;
  auto* params_opt = simulate->add_option("--params", params_file, "JSON with pi and theta");
  auto* archive_opt = simulate->add_option("--archive", sim_archive, "draw from a fit's posterior predictive");
  params_opt->excludes(archive_opt);
  simulate->add_option("--design", design_file, "item,rater CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return RATER_ERR_ARGUMENT;
  }

  try {
    if (*convert) {
      DatasetHandle in, out;
      read_dataset(convert_in, convert_data, in);
      check(rater_dataset_convert(in.ptr, convert_to.c_str(), &out.ptr));
      OwnedString csv;
      check(rater_dataset_to_csv(out.ptr, &csv.ptr));
      emit(g, csv.str());
      OwnedString warnings;
      check(rater_dataset_warnings(in.ptr, &warnings.ptr));
      note(g, warnings.str());
    } else if (*fit) {
      DatasetHandle data;
      read_dataset(fit_data, fit_flags, data);
      std::string beta_csv;
      if (!beta_file.empty()) beta_csv = read_text(beta_file);
      rater_fit_options o;
      rater_fit_options_init(&o);
      o.model = model.c_str();
      o.method = method.c_str();
      o.init = init.c_str();
      o.tol = tol;
      o.max_iter = max_iter;
      o.chains = chains;
      o.warmup = warmup;
      o.draws = draws;
      o.seed = g.seed;
      o.target_accept = target_accept;
      o.max_leapfrog = max_leapfrog;
      if (!alpha.empty()) {
        o.alpha = alpha.data();
        o.alpha_length = alpha.size();
      }
      if (!beta_file.empty()) o.beta_csv = beta_csv.c_str();
      o.has_prior_n = prior_n.has_value();
      o.prior_n = prior_n.value_or(0.0);
      o.has_prior_p = prior_p.has_value();
      o.prior_p = prior_p.value_or(0.0);
      FitHandle result;
      check(rater_fit_run(data.ptr, &o, progress_line, &g, &result.ptr));
      OwnedString archive;
      check(rater_fit_save(result.ptr, &archive.ptr));
      emit(g, archive.str());
      OwnedString warnings;
      check(rater_fit_warnings(result.ptr, &warnings.ptr));
      note(g, warnings.str());
    } else if (*summary) {
      FitHandle f;
      read_fit(summary_archive, f);
      if (!summary_data.empty()) {
        DatasetHandle data;
        read_dataset(summary_data, summary_flags, data);
        check(rater_fit_check_data(f.ptr, data.ptr));
      }
      OwnedString text;
      check(rater_fit_summary(f.ptr, &text.ptr));
      emit(g, text.str());
    } else if (*extract) {
      FitHandle f;
      read_fit(extract_archive, f);
      OwnedString text;
      check(rater_fit_extract(f.ptr, what.c_str(), level, &text.ptr));
      emit(g, text.str());
    } else if (*plot) {
      FitHandle f;
      read_fit(plot_archive, f);
      OwnedString text;
      check(rater_fit_plotdata(f.ptr, kind.c_str(), items.empty() ? nullptr : items.data(), items.size(), &text.ptr));
      emit(g, text.str());
    } else if (*simulate) {
      const std::string design = read_text(design_file);
      OwnedString text;
      if (!sim_archive.empty()) {
        FitHandle f;
        read_fit(sim_archive, f);
        check(rater_fit_predict(f.ptr, design.data(), design.size(), g.seed, &text.ptr));
      } else if (!params_file.empty()) {
        const std::string params = read_text(params_file);
        check(rater_simulate(params.data(), params.size(), design.data(), design.size(), g.seed, &text.ptr));
      } else {
        std::cerr << "simulate needs --params or --archive\n";
        return RATER_ERR_ARGUMENT;
      }
      emit(g, text.str());
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << rater_last_error() << '\n';
    return f.status;
  }
  return RATER_OK;
}
