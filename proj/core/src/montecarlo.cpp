#include "evpanel/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "evpanel/parallel.hpp"
#include "evpanel/rng.hpp"

namespace evpanel {

namespace {

void run_one_rep(const McCell& cell, int rep, std::uint64_t study_seed,
                 McRep& out) {
  out.rep = rep;
  out.seed = derive_seed(study_seed,
                         {stream::replication, static_cast<std::uint64_t>(rep)});
  try {
    SimConfig sc = cell.sim;
    sc.seed = out.seed;
    const SimResult sim = simulate_panel(sc, 1);

    FitOptions fo = cell.fit;
    fo.threads = 1;
    fo.start_seed = out.seed;
    const FitResult fit = fit_outcome_model(sim.panel, sc.design, fo);
    out.converged = fit.converged;
    out.names = fit.param_names;
    std::vector<double> est(fit.natural.data(),
                            fit.natural.data() + fit.natural.size());
    std::vector<double> se(fit.natural.size(),
                           std::numeric_limits<double>::quiet_NaN());
    if (fit.se_natural.size() == fit.natural.size())
      std::copy(fit.se_natural.data(),
                fit.se_natural.data() + fit.se_natural.size(), se.begin());

    if (cell.run_naive) {
      const NaiveFit naive = naive_ols(sim.panel, sc.design);
      for (std::size_t c = 0; c < naive.colnames.size(); ++c) {
        out.names.push_back("naive_" + naive.colnames[c]);
        est.push_back(naive.coef[static_cast<Eigen::Index>(c)]);
        se.push_back(naive.se[static_cast<Eigen::Index>(c)]);
      }
    }
    out.estimate = Eigen::Map<const Vector>(est.data(),
                                            static_cast<Eigen::Index>(est.size()));
    out.se = Eigen::Map<const Vector>(se.data(),
                                      static_cast<Eigen::Index>(se.size()));
    out.ok = true;
  } catch (const Error& e) {
    out.ok = false;
    out.error = e.what();
  }
}

int find_name(const std::vector<std::string>& names, const std::string& want) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == want) return static_cast<int>(i);
  return -1;
}

}  // namespace

McCellResult run_cell(const McCell& cell, int n_reps, std::uint64_t study_seed,
                      int threads) {
  require(n_reps >= 1, ErrorCode::config, "study needs n_reps >= 1, got ", n_reps);
  McCellResult res;
  res.cell = cell.name;
  res.n_reps = n_reps;
  res.reps.resize(static_cast<std::size_t>(n_reps));
  parallel_for(n_reps, threads, [&](int r) {
    run_one_rep(cell, r, study_seed, res.reps[static_cast<std::size_t>(r)]);
  });

  for (const McRep& r : res.reps)
    if (r.ok && r.converged)
      ++res.n_ok;
    else
      ++res.n_fail;
  res.failed = res.n_fail > n_reps / 5;

  for (const auto& [param, truth] : cell.truth) {
    McParamStat st;
    st.param = param;
    st.truth = truth;
    std::vector<double> est, se;
    for (const McRep& r : res.reps) {
      if (!r.ok) continue;
      const int idx = find_name(r.names, param);
      if (idx < 0) continue;
      est.push_back(r.estimate[idx]);
      se.push_back(r.se[idx]);
    }
    st.n_ok = static_cast<int>(est.size());
    if (st.n_ok > 0) {
      double sum = 0.0, abs_sum = 0.0, sq_sum = 0.0, se_sum = 0.0;
      int covered = 0;
      for (std::size_t i = 0; i < est.size(); ++i) {
        const double e = est[i] - truth;
        sum += est[i];
        abs_sum += std::abs(e);
        sq_sum += e * e;
        se_sum += se[i];
        if (std::abs(e) <= 3.0 * se[i]) ++covered;
      }
      const double n = static_cast<double>(st.n_ok);
      st.mean = sum / n;
      st.bias = st.mean - truth;
      st.mae = abs_sum / n;
      st.rmse = std::sqrt(sq_sum / n);
      st.mean_se = se_sum / n;
      st.cov3se = covered / n;
      double dev = 0.0;
      for (double e : est) dev += (e - st.mean) * (e - st.mean);
      st.mc_se = st.n_ok > 1 ? std::sqrt(dev / (n - 1.0) / n) : 0.0;
    }
    res.stats.push_back(std::move(st));
  }
  return res;
}

std::vector<McCellResult> run_study(const std::vector<McCell>& cells, int n_reps,
                                    std::uint64_t study_seed, int threads,
                                    const CellCallback& on_cell) {
  std::vector<McCellResult> out;
  out.reserve(cells.size());
  for (const McCell& cell : cells) {
    out.push_back(run_cell(cell, n_reps, study_seed, threads));
    if (on_cell) on_cell(out.back());
  }
  return out;
}

}  // namespace evpanel
