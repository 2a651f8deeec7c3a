// Command-line front end for the product-matching / entity-alignment
// pipeline: build KGs, rough-filter candidates, train channels, align,
// evaluate, run everything end to end, generate synthetic datasets and run
// the ablation table.
//
// Exit codes: 0 success, 2 config error, 3 input error, 4 numeric failure.

#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "raea/pipeline.hpp"

namespace {

int guarded(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const raea::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const raea::InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 3;
  } catch (const raea::ParseError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 3;
  } catch (const raea::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-stage product matching: rule-based blocking plus "
               "multi-channel graph-attention entity alignment"};
  app.require_subcommand(1);

  std::string config_path;
  std::string queries_path, cands_path, rules_path, out_path, stats_path;
  raea::SynthConfig synth;
  std::string synth_out = "synth";

  auto* build = app.add_subcommand("build-kg", "load, validate and partition the graphs");
  build->add_option("--config", config_path, "pipeline config file")->required();

  auto* rough = app.add_subcommand("rough-filter", "rule-based candidate blocking");
  rough->add_option("--queries", queries_path, "query product records TSV")->required();
  rough->add_option("--candidates", cands_path, "candidate product records TSV")->required();
  rough->add_option("--rules", rules_path, "rule file (query<TAB>candidate patterns)")->required();
  rough->add_option("--out", out_path, "candidate set output file")->required();
  rough->add_option("--stats", stats_path, "coverage stats output file");

  auto* train = app.add_subcommand("train", "train every enabled channel");
  train->add_option("--config", config_path, "pipeline config file")->required();

  auto* align = app.add_subcommand("align", "similarity matrices, ensemble and top-K");
  align->add_option("--config", config_path, "pipeline config file")->required();

  auto* evaluate = app.add_subcommand("evaluate", "metric report from a similarity file");
  evaluate->add_option("--config", config_path, "pipeline config file")->required();
  evaluate->add_option("--sim", out_path, "similarity file (default <out_dir>/sim_ensemble.tsv)");

  auto* pipeline = app.add_subcommand("pipeline", "train + align + evaluate end to end");
  pipeline->add_option("--config", config_path, "pipeline config file")->required();

  auto* ablate = app.add_subcommand("ablate", "metric table over the model variants");
  ablate->add_option("--config", config_path, "pipeline config file")->required();

  auto* gen = app.add_subcommand("synth", "generate an aligned synthetic graph pair");
  gen->add_option("--entities", synth.n_entities, "entities per graph");
  gen->add_option("--relations", synth.n_relations, "relation vocabulary size");
  gen->add_option("--predicates", synth.n_predicates, "attribute predicate count");
  gen->add_option("--density", synth.rel_density, "relation triples per entity");
  gen->add_option("--attrs", synth.attr_per_entity, "attribute triples per entity");
  gen->add_option("--numeric-fraction", synth.numeric_fraction, "share of digital values");
  gen->add_option("--attr-noise", synth.attr_noise, "fraction of graph-2 values replaced");
  gen->add_option("--rel-noise", synth.rel_noise, "fraction of graph-2 triples perturbed");
  gen->add_option("--seed", synth.rng_seed, "generator seed");
  gen->add_option("--out", synth_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  if (build->parsed())
    return guarded([&] { raea::run_build_kg(raea::load_pipeline_config(config_path)); });

  if (rough->parsed())
    return guarded([&] {
      const auto stats =
          raea::run_rough_filter(queries_path, cands_path, rules_path, out_path, stats_path);
      std::cout << "queries: " << stats.per_query.size()
                << "  empty: " << stats.empty_queries
                << "  distinct candidates: " << stats.distinct_candidates << "\n";
    });

  if (train->parsed())
    return guarded([&] {
      const auto cfg = raea::load_pipeline_config(config_path);
      auto data = raea::load_pipeline_data(cfg);
      const auto trained = raea::run_train(cfg, data);
      for (const auto& tc : trained)
        std::cout << raea::channel_name(tc.kind) << ": best val hits@1 "
                  << tc.grid.best_run.best_hits1 << " at epoch " << tc.grid.best_run.best_epoch
                  << " (lr=" << tc.grid.best_learning_rate << ", l2=" << tc.grid.best_l2 << ")\n";
    });

  if (align->parsed())
    return guarded([&] {
      const auto cfg = raea::load_pipeline_config(config_path);
      auto data = raea::load_pipeline_data(cfg);
      auto trained = raea::load_trained_channels(cfg, data);
      raea::run_align(cfg, data, trained);
      std::cout << "wrote " << cfg.out_dir << "/sim_ensemble.tsv and topk.tsv\n";
    });

  if (evaluate->parsed())
    return guarded([&] {
      const auto cfg = raea::load_pipeline_config(config_path);
      auto data = raea::load_pipeline_data(cfg);
      const std::string sim_path =
          out_path.empty() ? cfg.out_dir + "/sim_ensemble.tsv" : out_path;
      const auto sim = raea::load_similarity(sim_path, data);
      const auto report = raea::run_evaluate(cfg, data, sim);
      std::cout << raea::format_metric_report(report);
    });

  if (pipeline->parsed())
    return guarded([&] {
      const auto cfg = raea::load_pipeline_config(config_path);
      const auto report = raea::run_pipeline(cfg);
      std::cout << raea::format_metric_report(report);
    });

  if (ablate->parsed())
    return guarded([&] {
      const auto cfg = raea::load_pipeline_config(config_path);
      const auto rows = raea::run_ablate(cfg);
      for (const auto& row : rows)
        std::cout << row.variant << ": hits@1 " << row.report.hits1.point << "\n";
      std::cout << "wrote " << cfg.out_dir << "/ablation.tsv\n";
    });

  if (gen->parsed())
    return guarded([&] {
      raea::run_synth(synth, synth_out);
      std::cout << "wrote synthetic pair under " << synth_out << "\n";
    });

  return 1;
}
