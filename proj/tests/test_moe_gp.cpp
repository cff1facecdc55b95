#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include <sdtwin/moe_gp.hpp>

#include "golden_values.hpp"

using namespace sdtwin;

namespace {

std::vector<double> concat(std::initializer_list<std::array<double, 8>> blocks) {
    std::vector<double> v;
    for (const auto &b : blocks)
        v.insert(v.end(), b.begin(), b.end());
    return v;
}

std::vector<TrainingPoint> fixture_data() {
    std::vector<TrainingPoint> d;
    for (const auto &[t, y] : golden::mixture_data)
        d.push_back({t, y});
    return d;
}

MixingCoefficients fixture_mixing() { return {{golden::mixing[0], golden::mixing[1]}}; }

MoEGPModel fixture_model() {
    MoEGPModel m;
    m.experts = 2;
    m.mixing = fixture_mixing();
    m.ensemble.dim = 16;
    m.ensemble.values = concat({golden::expert_a, golden::expert_b});
    const auto second = concat({golden::expert_c, golden::expert_d});
    m.ensemble.values.insert(m.ensemble.values.end(), second.begin(), second.end());
    m.ensemble.weights = {0.4, 0.6};
    m.ensemble.log_unnorm_weights = {std::log(0.4), std::log(0.6)};
    return m;
}

} // namespace

TEST(GateWeights, Golden) {
    const GatingParams g{{-1.0, 1.0}, {0.0, 0.0}};
    const auto z = gate_weights(-1.0, g, MixingCoefficients::uniform(2));
    EXPECT_NEAR(z[0], golden::gate_at_minus_one[0], 1e-15);
    EXPECT_NEAR(z[1], golden::gate_at_minus_one[1], 1e-15);
}

TEST(GateWeights, SimplexOnRandomDraws) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n01;
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int draw = 0; draw < 1000; ++draw) {
        const std::size_t m = 1 + draw % 5;
        GatingParams g;
        MixingCoefficients pi;
        double total = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            g.center.push_back(n01(rng));
            g.log_precision.push_back(2.0 * n01(rng));
            pi.pi.push_back(u(rng));
            total += pi.pi.back();
        }
        for (auto &p : pi.pi)
            p /= total;
        const auto z = gate_weights(3.0 * n01(rng), g, pi);
        double sum = 0.0;
        for (double v : z) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
            sum += v;
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(GateWeights, FarFromCentersStaysFinite) {
    const GatingParams g{{-1.0, 1.0}, {5.0, 5.0}};
    const auto z = gate_weights(40.0, g, MixingCoefficients::uniform(2));
    EXPECT_NEAR(z[1], 1.0, 1e-12);
}

TEST(GateWeights, ZeroMixingSilencesExpert) {
    const GatingParams g{{0.0, 0.0}, {0.0, 0.0}};
    const auto z = gate_weights(0.3, g, {{1.0, 0.0}});
    EXPECT_EQ(z[0], 1.0);
    EXPECT_EQ(z[1], 0.0);
}

TEST(MixingCoefficients, Validation) {
    EXPECT_NO_THROW(MixingCoefficients::uniform(3).validate());
    try {
        MixingCoefficients{{0.5, 0.6}}.validate();
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), Errc::NotASimplex);
    }
    EXPECT_THROW((MixingCoefficients{{1.2, -0.2}}.validate()), Error);
    EXPECT_THROW(MixingCoefficients{}.validate(), Error);
}

TEST(Layout, PackUnpackRoundTrip) {
    const auto theta = concat({golden::expert_a, golden::expert_b});
    const auto u = unpack(theta, 2);
    EXPECT_EQ(u.gating.center[1], golden::expert_b[0]);
    EXPECT_EQ(u.experts[0].log_noise, golden::expert_a[7]);
    EXPECT_EQ(pack(u.gating, u.experts), theta);
    EXPECT_EQ(HyperparameterLayout{3}.size(), 24u);
    EXPECT_THROW(unpack(theta, 3), Error);
}

TEST(MixtureLikelihood, Golden) {
    const auto data = fixture_data();
    const auto theta = concat({golden::expert_a, golden::expert_b});
    EXPECT_NEAR(mixture_log_likelihood(data, theta, fixture_mixing()), golden::mixture_loglik, 1e-13);
}

TEST(MixtureLikelihood, LabelSymmetry) {
    const auto data = fixture_data();
    const double a = mixture_log_likelihood(data, concat({golden::expert_a, golden::expert_b}), fixture_mixing());
    const double b = mixture_log_likelihood(data, concat({golden::expert_b, golden::expert_a}),
                                            MixingCoefficients{{golden::mixing[1], golden::mixing[0]}});
    EXPECT_NEAR(a, b, 1e-13);
}

TEST(MixtureLikelihood, SingleActiveExpertReduces) {
    const auto data = fixture_data();
    const auto theta = concat({golden::expert_a, golden::expert_b});
    const auto e = GPExpertParams::from_span(std::span<const double>(theta).subspan(2, 6));
    double expected = 0.0;
    for (const auto &p : data)
        expected += pointwise_log_density(p.y, p.t, e);
    EXPECT_NEAR(mixture_log_likelihood(data, theta, {{1.0, 0.0}}), expected, 1e-13);
}

TEST(MixtureLikelihood, EmptyDataIsZero) {
    const auto theta = concat({golden::expert_a});
    EXPECT_EQ(mixture_log_likelihood({}, theta, MixingCoefficients::uniform(1)), 0.0);
}

TEST(PosteriorDensity, PriorAndTempering) {
    const auto data = fixture_data();
    const auto theta = concat({golden::expert_a, golden::expert_b});
    double ss = 0.0;
    for (double v : theta)
        ss += v * v;
    const double prior = -0.5 * ss - 8.0 * std::log(2.0 * std::numbers::pi);
    EXPECT_NEAR(log_prior_density(theta), prior, 1e-13);
    EXPECT_DOUBLE_EQ(log_posterior_density(theta, fixture_mixing(), data, 0.0), log_prior_density(theta));
    EXPECT_NEAR(log_posterior_density(theta, fixture_mixing(), data, 0.5), prior + 0.5 * golden::mixture_loglik,
                1e-12);
    EXPECT_THROW(log_posterior_density(theta, fixture_mixing(), data, 1.5), Error);
}

TEST(PosteriorPredictive, Golden) {
    const auto p = posterior_predictive(0.3, fixture_model());
    EXPECT_NEAR(p.mean, golden::predictive_mean, 1e-13);
    EXPECT_NEAR(p.variance, golden::predictive_variance, 1e-13);
}

TEST(PosteriorPredictive, LawOfTotalVariance) {
    const auto p = posterior_predictive(0.3, fixture_model(), default_probabilities, true);
    double w = 0.0, m1 = 0.0, m2 = 0.0;
    for (const auto &c : p.components) {
        w += c.weight;
        m1 += c.weight * c.mean;
        m2 += c.weight * (c.variance + c.mean * c.mean);
    }
    EXPECT_NEAR(w, 1.0, 1e-12);
    EXPECT_NEAR(p.mean, m1, 1e-12);
    EXPECT_NEAR(p.variance, m2 - m1 * m1, 1e-10);
}

TEST(PosteriorPredictive, QuantilesOrderedAndConsistent) {
    const auto p = posterior_predictive(0.3, fixture_model(), default_probabilities, true);
    const double lo = p.quantile(0.025), med = p.quantile(0.5), hi = p.quantile(0.975);
    EXPECT_LT(lo, med);
    EXPECT_LT(med, hi);
    auto cdf = [&](double x) {
        double acc = 0.0;
        for (const auto &c : p.components)
            acc += c.weight * 0.5 * std::erfc(-(x - c.mean) / std::sqrt(2.0 * c.variance));
        return acc;
    };
    EXPECT_NEAR(cdf(lo), 0.025, 1e-7);
    EXPECT_NEAR(cdf(med), 0.5, 1e-7);
    EXPECT_NEAR(cdf(hi), 0.975, 1e-7);
    EXPECT_THROW(p.quantile(0.9), Error);
}

TEST(PosteriorPredictive, StandardizerApplied) {
    auto m = fixture_model();
    m.standardizer = {10.0, 2.0};
    const auto a = posterior_predictive(10.6, m);
    const auto b = posterior_predictive(0.3, fixture_model());
    EXPECT_NEAR(a.mean, b.mean, 1e-13);
}

TEST(SummarizeMixture, SingleGaussian) {
    const auto p = summarize_mixture(0.0, {{1.0, 2.0, 4.0}}, default_probabilities, false);
    EXPECT_DOUBLE_EQ(p.mean, 2.0);
    EXPECT_DOUBLE_EQ(p.variance, 4.0);
    EXPECT_NEAR(p.quantile(0.5), 2.0, 1e-7);
    EXPECT_NEAR(p.quantile(0.975), 2.0 + 1.959963984540054 * 2.0, 1e-7);
}

TEST(SummarizeMixture, MergesDuplicatesAndRejectsEmpty) {
    const auto p = summarize_mixture(0.0, {{0.3, 1.0, 1.0}, {0.2, 1.0, 1.0}, {0.5, -1.0, 1.0}}, {}, true);
    ASSERT_EQ(p.components.size(), 2u);
    EXPECT_NEAR(p.mean, 0.0, 1e-15);
    EXPECT_NEAR(p.variance, 2.0, 1e-15);
    try {
        summarize_mixture(0.0, {{0.0, 1.0, 1.0}}, {}, false);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), Errc::EmptyEnsemble);
    }
}

TEST(PosteriorPredictive, EmptyEnsemble) {
    MoEGPModel m;
    EXPECT_THROW(posterior_predictive(0.0, m), Error);
}
