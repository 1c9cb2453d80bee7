#include "penhaz/sim_engine.hpp"

#include "penhaz/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace penhaz {
namespace {

struct MeanSe {
    double mean = 0.0;
    double sd = 0.0;
    double se = 0.0;
};

MeanSe summarize(const std::vector<double>& v) {
    MeanSe out;
    if (v.empty()) return out;
    const double n = static_cast<double>(v.size());
    out.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - out.mean) * (x - out.mean);
        out.sd = std::sqrt(ss / (n - 1.0));
        out.se = out.sd / std::sqrt(n);
    }
    return out;
}

double mean_width(const CurveBand& band) {
    double s = 0.0;
    for (std::size_t i = 0; i < band.lower.size(); ++i) s += band.upper[i] - band.lower[i];
    return band.lower.empty() ? 0.0 : s / static_cast<double>(band.lower.size());
}

struct ReplicaFit {
    SurvivalDataset data;
    SplineSpec spec;
    KappaSearchResult search;
};

ReplicaFit fit_replica(SurvivalDataset data, int n_knots, KnotPlacement placement,
                       const KappaSearchOptions& search) {
    SplineSpec spec = make_knots(data.time, n_knots, placement);
    KappaSearchResult result = select_kappa(data, spec, search);
    return {std::move(data), std::move(spec), std::move(result)};
}

std::pair<double, double> event_time_range(const SurvivalDataset& data) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int i = 0; i < data.size(); ++i) {
        if (!data.event[i]) continue;
        lo = std::min(lo, data.time[i]);
        hi = std::max(hi, data.time[i]);
    }
    if (!(hi > lo)) throw std::runtime_error("fewer than two distinct event times");
    return {lo, hi};
}

}  // namespace

double WeibullTruth::hazard(double t) const { return (shape / scale) * std::pow(t / scale, shape - 1.0); }

double WeibullTruth::cumulative_hazard(double t) const { return std::pow(t / scale, shape); }

double weibull_from_uniform(double u, const WeibullTruth& truth) {
    return truth.scale * std::pow(-std::log(u), 1.0 / truth.shape);
}

std::vector<double> gen_weibull(int n, const WeibullTruth& truth, RandomStream& rng) {
    if (n < 1) throw std::invalid_argument("gen_weibull: n must be >= 1");
    std::vector<double> out(n);
    for (auto& t : out) t = weibull_from_uniform(rng.uniform(), truth);
    return out;
}

std::string_view to_string(CensoringMode mode) {
    return mode == CensoringMode::RandomSubset ? "random-subset" : "administrative";
}

CensoredSample apply_censoring(std::span<const double> times, double prop, RandomStream& rng,
                               CensoringMode mode) {
    if (!(prop >= 0.0 && prop < 1.0)) throw std::invalid_argument("censoring proportion must be in [0, 1)");
    const std::size_t n = times.size();
    CensoredSample out{std::vector<double>(times.begin(), times.end()), std::vector<std::uint8_t>(n, 1)};
    const auto count = static_cast<std::size_t>(std::floor(prop * static_cast<double>(n)));
    if (count == 0) return out;

    if (mode == CensoringMode::RandomSubset) {
        // Partial Fisher-Yates: the first `count` slots are the censored set.
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
            std::swap(idx[i], idx[j]);
        }
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t s = idx[i];
            out.time[s] = rng.uniform() * times[s];
            out.event[s] = 0;
        }
        return out;
    }

    // Administrative: censor the `count` largest times at the midpoint between
    // the last kept and the first censored order statistic.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
    const std::size_t first_cens = n - count;
    const double cutoff = first_cens == 0 ? 0.5 * times[order[0]]
                                          : 0.5 * (times[order[first_cens - 1]] + times[order[first_cens]]);
    for (std::size_t r = first_cens; r < n; ++r) {
        out.time[order[r]] = std::min(cutoff, times[order[r]]);
        out.event[order[r]] = 0;
    }
    return out;
}

SurvivalDataset gen_ph(int n, const WeibullTruth& baseline, std::span<const double> betas,
                       std::span<const UniformRange> covariate_dists, RandomStream& rng, bool risk_multiplies) {
    const auto p = static_cast<int>(betas.size());
    if (p < 1) throw std::invalid_argument("gen_ph: at least one covariate is required");
    if (covariate_dists.size() != betas.size())
        throw std::invalid_argument("gen_ph: one covariate distribution per coefficient is required");
    if (n < 1) throw std::invalid_argument("gen_ph: n must be >= 1");

    Eigen::MatrixXd x(n, p);
    std::vector<double> t(n);
    for (int i = 0; i < n; ++i) {
        double lin = 0.0;
        for (int j = 0; j < p; ++j) {
            x(i, j) = rng.uniform(covariate_dists[j].lo, covariate_dists[j].hi);
            lin += x(i, j) * betas[j];
        }
        const double e = -std::log(rng.uniform());
        const double scaled = risk_multiplies ? e * std::exp(lin) : e / std::exp(lin);
        t[i] = baseline.scale * std::pow(scaled, 1.0 / baseline.shape);
    }
    return SurvivalDataset(std::move(t), std::vector<std::uint8_t>(n, 1), std::move(x));
}

TrueCurves true_curves(const WeibullTruth& truth, std::span<const double> times) {
    TrueCurves out;
    out.hazard.reserve(times.size());
    out.survival.reserve(times.size());
    for (double t : times) {
        if (!(t > 0.0)) throw std::invalid_argument("true_curves: times must be positive");
        out.hazard.push_back(truth.hazard(t));
        out.survival.push_back(truth.survival(t));
    }
    return out;
}

double coverage_fraction(const CurveBand& band, std::span<const double> truth) {
    if (truth.size() != band.lower.size() || truth.empty())
        throw std::invalid_argument("coverage_fraction: truth and band sizes differ");
    std::size_t inside = 0;
    for (std::size_t i = 0; i < truth.size(); ++i)
        if (band.lower[i] <= truth[i] && truth[i] <= band.upper[i]) ++inside;
    return static_cast<double>(inside) / static_cast<double>(truth.size());
}

void Scenario::validate() const {
    if (!(truth.shape > 0.0 && truth.scale > 0.0)) throw std::invalid_argument("Weibull shape and scale must be > 0");
    if (n < 10) throw std::invalid_argument("scenario n must be >= 10");
    if (replicas < 1) throw std::invalid_argument("scenario replicas must be >= 1");
    if (n_gridpoints < 2) throw std::invalid_argument("scenario grid needs >= 2 points");
    if (!(censoring_prop >= 0.0 && censoring_prop < 1.0))
        throw std::invalid_argument("censoring proportion must be in [0, 1)");
    if (!(ci_level > 0.0 && ci_level < 1.0)) throw std::invalid_argument("ci level must be in (0, 1)");
    if (n_knots < 2) throw std::invalid_argument("n_knots must be >= 2");
    if (betas.size() != covariate_dists.size())
        throw std::invalid_argument("one covariate distribution per coefficient is required");
    for (const auto& r : covariate_dists)
        if (!(r.hi > r.lo)) throw std::invalid_argument("covariate range must have hi > lo");
    if (estimators.empty()) throw std::invalid_argument("at least one variance estimator is required");
}

void parallel_for(int count, int workers, const std::function<void(int)>& body) {
    if (workers <= 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    workers = std::min(workers, std::max(count, 1));
    if (workers <= 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

CoverageReport coverage_experiment(const Scenario& scenario, int workers) {
    scenario.validate();
    const auto n_est = scenario.estimators.size();

    struct EstimatorOutcome {
        bool ok = false;
        double survival = 0.0, hazard = 0.0, survival_width = 0.0, hazard_width = 0.0;
    };
    struct Outcome {
        bool ok = false;
        std::string error;
        double kappa = 0.0;
        std::vector<EstimatorOutcome> est;
    };
    std::vector<Outcome> outcomes(scenario.replicas);

    parallel_for(scenario.replicas, workers, [&](int r) {
        Outcome& out = outcomes[r];
        out.est.resize(n_est);
        try {
            RandomStream rng = RandomStream::substream(scenario.seed, static_cast<std::uint64_t>(r));
            const auto latent = gen_weibull(scenario.n, scenario.truth, rng);
            auto cens = apply_censoring(latent, scenario.censoring_prop, rng, scenario.censoring_mode);
            ReplicaFit rf = fit_replica(SurvivalDataset(std::move(cens.time), std::move(cens.event)),
                                        scenario.n_knots, scenario.knot_placement, scenario.kappa_search);
            const auto [lo, hi] = event_time_range(rf.data);
            const auto grid = linspace(lo, hi, scenario.n_gridpoints);
            const auto truth = true_curves(scenario.truth, grid);
            for (std::size_t e = 0; e < n_est; ++e) {
                try {
                    const auto var = estimate_variance(rf.search.fit, scenario.estimators[e]);
                    const auto sb = survival_band(rf.search.fit, var, rf.spec, grid, scenario.ci_level);
                    const auto hb = hazard_band(rf.search.fit, var, rf.spec, grid, scenario.ci_level);
                    out.est[e] = {true, coverage_fraction(sb, truth.survival), coverage_fraction(hb, truth.hazard),
                                  mean_width(sb), mean_width(hb)};
                } catch (const std::exception&) {
                    out.est[e].ok = false;
                }
            }
            out.kappa = rf.search.kappa_hat;
            out.ok = true;
        } catch (const std::exception& e) {
            out.ok = false;
            out.error = "replica " + std::to_string(r) + ": " + e.what();
        }
    });

    CoverageReport report;
    report.kind = "coverage";
    report.scenario = scenario;
    for (const auto& o : outcomes) {
        if (o.ok) {
            ++report.replicas_ok;
            report.kappas.push_back(o.kappa);
        } else {
            ++report.replica_failures;
            report.failure_messages.push_back(o.error);
        }
    }
    for (std::size_t e = 0; e < n_est; ++e) {
        std::vector<double> sc, hc, sw, hw;
        int failures = 0;
        for (const auto& o : outcomes) {
            if (!o.ok) continue;
            if (!o.est[e].ok) {
                ++failures;
                continue;
            }
            sc.push_back(o.est[e].survival);
            hc.push_back(o.est[e].hazard);
            sw.push_back(o.est[e].survival_width);
            hw.push_back(o.est[e].hazard_width);
        }
        EstimatorCoverage ec;
        ec.method = scenario.estimators[e];
        const auto s = summarize(sc), h = summarize(hc);
        ec.survival_coverage = s.mean;
        ec.survival_coverage_se = s.se;
        ec.hazard_coverage = h.mean;
        ec.hazard_coverage_se = h.se;
        ec.survival_mean_width = summarize(sw).mean;
        ec.hazard_mean_width = summarize(hw).mean;
        ec.replicas_used = static_cast<int>(sc.size());
        ec.failures = failures;
        report.estimators.push_back(ec);
    }
    report.warning = report.replica_failures > 0.05 * scenario.replicas;
    return report;
}

CoverageReport ph_experiment(const Scenario& scenario, int workers) {
    scenario.validate();
    if (scenario.betas.empty()) throw std::invalid_argument("ph experiment needs at least one covariate");
    const auto n_est = scenario.estimators.size();
    const auto p = scenario.betas.size();

    struct Outcome {
        bool ok = false;
        std::string error;
        double kappa = 0.0;
        std::vector<std::optional<std::vector<CoefficientInterval>>> est;
    };
    std::vector<Outcome> outcomes(scenario.replicas);

    parallel_for(scenario.replicas, workers, [&](int r) {
        Outcome& out = outcomes[r];
        out.est.resize(n_est);
        try {
            RandomStream rng = RandomStream::substream(scenario.seed, static_cast<std::uint64_t>(r));
            SurvivalDataset data = gen_ph(scenario.n, scenario.truth, scenario.betas, scenario.covariate_dists, rng,
                                          scenario.risk_multiplies);
            auto cens = apply_censoring(data.time, scenario.censoring_prop, rng, scenario.censoring_mode);
            data.time = std::move(cens.time);
            data.event = std::move(cens.event);
            ReplicaFit rf = fit_replica(std::move(data), scenario.n_knots, scenario.knot_placement,
                                        scenario.kappa_search);
            for (std::size_t e = 0; e < n_est; ++e) {
                try {
                    const auto var = estimate_variance(rf.search.fit, scenario.estimators[e]);
                    out.est[e] = beta_intervals(rf.search.fit, var, scenario.ci_level);
                } catch (const std::exception&) {
                    out.est[e].reset();
                }
            }
            out.kappa = rf.search.kappa_hat;
            out.ok = true;
        } catch (const std::exception& e) {
            out.ok = false;
            out.error = "replica " + std::to_string(r) + ": " + e.what();
        }
    });

    CoverageReport report;
    report.kind = "ph";
    report.scenario = scenario;
    for (const auto& o : outcomes) {
        if (o.ok) {
            ++report.replicas_ok;
            report.kappas.push_back(o.kappa);
        } else {
            ++report.replica_failures;
            report.failure_messages.push_back(o.error);
        }
    }
    for (std::size_t e = 0; e < n_est; ++e) {
        for (std::size_t j = 0; j < p; ++j) {
            std::vector<double> est, sd, width, covered;
            const double truth = scenario.betas[j];
            for (const auto& o : outcomes) {
                if (!o.ok || !o.est[e]) continue;
                const auto& ci = (*o.est[e])[j];
                est.push_back(ci.estimate);
                sd.push_back(ci.sd);
                width.push_back(ci.upper - ci.lower);
                covered.push_back(ci.lower <= truth && truth <= ci.upper ? 1.0 : 0.0);
            }
            CoefficientSummary cs;
            cs.method = scenario.estimators[e];
            cs.index = static_cast<int>(j) + 1;
            cs.truth = truth;
            const auto es = summarize(est);
            cs.mean_estimate = es.mean;
            cs.empirical_sd = es.sd;
            cs.mean_sd = summarize(sd).mean;
            cs.mean_width = summarize(width).mean;
            cs.coverage = summarize(covered).mean;
            cs.replicas_used = static_cast<int>(est.size());
            report.coefficients.push_back(cs);
        }
    }
    report.warning = report.replica_failures > 0.05 * scenario.replicas;
    return report;
}

std::vector<KappaSequenceRow> kappa_sequence_experiment(std::span<const int> sizes, const WeibullTruth& truth,
                                                        std::uint64_t base_seed,
                                                        const KappaSequenceOptions& options, int workers) {
    if (sizes.empty()) throw std::invalid_argument("kappa sequence needs at least one sample size");
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (sizes[i] < 10) throw std::invalid_argument("kappa sequence sizes must be >= 10");
        if (i > 0 && sizes[i] <= sizes[i - 1]) throw std::invalid_argument("kappa sequence sizes must increase");
    }
    if (options.replicas < 1) throw std::invalid_argument("kappa sequence needs >= 1 replica");

    const int n_sizes = static_cast<int>(sizes.size());
    const int total = n_sizes * options.replicas;
    std::vector<double> kappas(total, std::numeric_limits<double>::quiet_NaN());
    parallel_for(total, workers, [&](int job) {
        const int s = job / options.replicas, r = job % options.replicas;
        const std::uint64_t index = (static_cast<std::uint64_t>(s) << 32) | static_cast<std::uint32_t>(r);
        try {
            RandomStream rng = RandomStream::substream(base_seed, index);
            const auto latent = gen_weibull(sizes[s], truth, rng);
            auto cens = apply_censoring(latent, options.censoring_prop, rng, options.censoring_mode);
            const ReplicaFit rf = fit_replica(SurvivalDataset(std::move(cens.time), std::move(cens.event)),
                                              options.n_knots, options.knot_placement, options.kappa_search);
            kappas[job] = rf.search.kappa_hat;
        } catch (const std::exception&) {
        }
    });

    std::vector<KappaSequenceRow> rows;
    for (int s = 0; s < n_sizes; ++s) {
        KappaSequenceRow row;
        row.n = sizes[s];
        double log_sum = 0.0;
        for (int r = 0; r < options.replicas; ++r) {
            const double k = kappas[s * options.replicas + r];
            if (std::isfinite(k) && k > 0.0) {
                row.replica_kappas.push_back(k);
                log_sum += std::log(k);
            } else {
                ++row.failures;
            }
        }
        if (row.replica_kappas.empty()) {
            std::ostringstream msg;
            msg << "kappa sequence: every replica failed at n=" << row.n;
            throw SelectionFailureError(msg.str());
        }
        row.kappa = std::exp(log_sum / static_cast<double>(row.replica_kappas.size()));
        row.kappa_over_sqrt_n = row.kappa / std::sqrt(static_cast<double>(row.n));
        row.lambda = row.kappa / row.n;
        rows.push_back(std::move(row));
    }
    return rows;
}

double lambda_log_log_slope(std::span<const KappaSequenceRow> rows) {
    if (rows.size() < 2) throw std::invalid_argument("slope needs at least two rows");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double k = static_cast<double>(rows.size());
    for (const auto& r : rows) {
        const double x = std::log(static_cast<double>(r.n)), y = std::log(r.lambda);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

}  // namespace penhaz
