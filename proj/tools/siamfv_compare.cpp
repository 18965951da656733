// Aggregator comparison report (FV vs sum vs max pooling, PCA/LDA whitening).

#include "siamfv/compare.hpp"
#include "siamfv/io.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Compare global aggregators on synthetic data"};
  app.name("siamfv-compare");
  siamfv::CompareConfig cfg;
  std::string out;
  int threads = 0;
  app.add_option("--seed", cfg.seed, "Seed")->required();
  app.add_option("--out", out, "Report JSON")->required();
  app.add_option("--dim", cfg.dim, "Descriptor dimension")->check(CLI::Range(2, 1 << 16));
  app.add_option("--clusters", cfg.clusters, "GMM clusters")->check(CLI::PositiveNumber);
  app.add_option("--train-epochs", cfg.train_epochs, "Siamese epochs before encoding")->check(CLI::NonNegativeNumber);
  app.add_option("--iterations-per-epoch", cfg.iterations_per_epoch, "Iterations per epoch")
      ->check(CLI::PositiveNumber);
  app.add_option("--threads", threads, "Cap on worker threads")->check(CLI::NonNegativeNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (threads > 0) omp_set_num_threads(threads);
  try {
    const siamfv::CompareReport report = siamfv::run_comparison(cfg);
    siamfv::io::write_text(out, report.to_json());
    std::cout << report.to_table();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
