// Generates the bundled four-item opinion-poll data set: binary responses
// driven by one strong latent dimension, with exact column totals. The
// bundled file data/abortion_poll.csv was produced by this tool with its
// default settings; regenerate with `make_poll_data --out <path>`.
//
// Construction: latent t_k ~ N(0,1); the latent score of response (k,l) is
// d_l * t_k - logit(u_kl) with u_kl uniform, and item l is set to 1 on the
// K_l highest scores. This is a 2PL draw conditioned on the column total,
// so margins are exact while the latent structure is preserved.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "latnr/diagnostics.hpp"
#include "latnr/linalg.hpp"
#include "latnr/rng.hpp"
#include "latnr/simulation.hpp"

using namespace latnr;

int main(int argc, char** argv) {
  CLI::App app{"generate the bundled opinion-poll data set"};
  std::string out_path = "data/abortion_poll.csv";
  std::uint64_t seed = 7;
  std::size_t n = 379;
  std::vector<std::size_t> totals = {167, 225, 228, 237};
  std::vector<double> slopes = {3.5, 3.5, 3.5, 3.5};
  bool report = false;
  app.add_option("--out", out_path, "output CSV path");
  app.add_option("--seed", seed, "generator seed");
  app.add_option("--rows", n, "number of units");
  app.add_option("--totals", totals, "column totals for the four items")->expected(4);
  app.add_option("--slopes", slopes, "latent slopes for the four items")->expected(4);
  app.add_flag("--report", report, "print population diagnostics for the written file");
  CLI11_PARSE(app, argc, argv);

  const std::size_t m = 4;
  SplitMix64 rng(seed, 0);
  std::vector<double> latent(n);
  for (double& t : latent) t = rng.next_normal();

  std::vector<std::uint8_t> y(n * m, 0);
  std::vector<std::size_t> order(n);
  std::vector<double> score(n);
  for (std::size_t l = 0; l < m; ++l) {
    for (std::size_t k = 0; k < n; ++k) {
      const double u = rng.next_double_open();
      score[k] = slopes[l] * latent[k] - std::log(u / (1.0 - u));
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
    for (std::size_t rank = 0; rank < totals[l] && rank < n; ++rank) {
      y[order[rank] * m + l] = 1;
    }
  }

  std::ofstream file(out_path);
  if (!file) {
    std::fprintf(stderr, "cannot write %s\n", out_path.c_str());
    return 1;
  }
  file << "unit_id,item1,item2,item3,item4\n";
  for (std::size_t k = 0; k < n; ++k) {
    file << (k + 1);
    for (std::size_t l = 0; l < m; ++l) file << ',' << static_cast<int>(y[k * m + l]);
    file << '\n';
  }
  file.close();
  std::printf("wrote %s (%zu rows)\n", out_path.c_str(), n);

  if (report) {
    const Population pop = build_population_abortion(out_path, 20240602);
    std::printf("Y_2 = %.0f\n", pop.total_of_interest);
    std::printf("mean p = %.4f (draw %.4f)\n", mean(pop.p_report), mean(pop.p_draw));
    const PopulationDiagnostics diag = population_latent_diagnostics(pop, 20240603);
    std::printf("alpha(x) = %.4f\n", diag.cronbach_alpha);
    std::printf("corr(theta-hat, y2) = %.4f\n", diag.corr_theta_item);
    std::printf("nominal item nonresponse:");
    for (double r : diag.nominal_item_nonresponse) std::printf(" %.1f%%", 100.0 * r);
    std::printf("\nfitted item nonresponse:");
    for (double r : diag.fitted_item_nonresponse) std::printf(" %.1f%%", 100.0 * r);
    std::printf("\n");

    ItemResponseMatrix matrix(n, m);
    for (std::size_t k = 0; k < n; ++k) {
      matrix.unit_id[k] = static_cast<std::int64_t>(k);
      for (std::size_t l = 0; l < m; ++l) matrix.set(k, l, y[k * m + l] != 0);
    }
    std::printf("alpha(y) = %.4f\n", cronbach_alpha(matrix));
    const LatentFit yfit = fit_2pl_em(matrix, {});
    std::vector<double> column(n);
    for (std::size_t l = 0; l < m; ++l) {
      for (std::size_t k = 0; k < n; ++k) column[k] = matrix(k, l);
      std::printf("corr(y%zu, theta^a) = %.3f\n", l + 1,
                  pearson_correlation(column, yfit.theta));
    }
  }
  return 0;
}
