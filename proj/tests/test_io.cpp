#include <string>
#include <vector>

#include <gtest/gtest.h>

#include <sdtwin/io.hpp>

using namespace sdtwin;

namespace {

std::string message_of(auto &&fn) {
    try {
        fn();
    } catch (const Error &e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST(ObservationsCsv, RoundTripIsExact) {
    SensingConfig c;
    c.degradation_case = DegradationCase::Joint;
    const auto obs = generate_dataset(c);
    const std::string text = observations_csv(obs, "abc");
    EXPECT_EQ(text.rfind("# config_sha256=abc\nt_s,omega_ds,lambda_re,sigma0\n", 0), 0u);
    const auto back = parse_observations_csv(text);
    ASSERT_EQ(back.size(), obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) {
        EXPECT_EQ(back[i].t_s, obs[i].t_s);
        EXPECT_EQ(back[i].omega_ds, obs[i].omega_ds);
        EXPECT_EQ(*back[i].lambda_re, *obs[i].lambda_re);
        EXPECT_EQ(back[i].sigma0, obs[i].sigma0);
    }
    EXPECT_EQ(observations_csv(back, "abc"), text);
    EXPECT_EQ(embedded_csv_digest(text), "abc");
}

TEST(ObservationsCsv, EmptyRealPart) {
    const auto obs = parse_observations_csv("t_s,omega_ds,lambda_re,sigma0\n0,6.2,,0.005\r\n\n# note\n1,6.1,,0.005\n");
    ASSERT_EQ(obs.size(), 2u);
    EXPECT_FALSE(obs[0].lambda_re.has_value());
    EXPECT_EQ(obs[1].omega_ds, 6.1);
}

TEST(ObservationsCsv, ErrorsNameLine) {
    const std::string bad = "# config_sha256=x\nt_s,omega_ds,lambda_re,sigma0\n0,6.2,,0.005\n1,six,,0.005\n";
    const auto msg = message_of([&] { parse_observations_csv(bad, "obs.csv"); });
    EXPECT_NE(msg.find("obs.csv:4"), std::string::npos) << msg;
    EXPECT_NE(msg.find("omega_ds"), std::string::npos);
    EXPECT_NE(message_of([] { parse_observations_csv("t_s,omega_ds,lambda_re,sigma0\n1,2,3\n"); }).find(":2:"),
              std::string::npos);
    EXPECT_NE(message_of([] { parse_observations_csv("time,freq\n"); }).find("header"), std::string::npos);
    EXPECT_NE(message_of([] { parse_observations_csv(""); }).find("missing header"), std::string::npos);
}

TEST(ProcessedCsv, MarksRejectedRows) {
    const auto m = normalized_nominal();
    std::vector<FrequencyObservation> obs(3);
    for (std::size_t i = 0; i < 3; ++i) {
        obs[i].t_s = static_cast<double>(i);
        obs[i].omega_ds = m.damped_omega0();
    }
    obs[1].omega_ds = -1.0;
    const auto p = process_dataset(obs, m, DegradationCase::Stiffness);
    const std::string text = processed_csv(obs, p);
    EXPECT_EQ(text, "t_s,delta_k_hat,delta_m_hat,rejected\n0,0,,\n1,,,InvalidFrequency\n2,0,,\n");
}

TEST(TraceCsv, Headers) {
    EmTrace t;
    t.iterations.push_back({1, {0.25, 0.75}, 0.5, -3.0, -4.0, false, 900.0, 2, 0.3});
    EXPECT_EQ(em_trace_csv(t, 2), "iter,em_error,expected_log_posterior,pi_1,pi_2\n1,0.5,-3,0.25,0.75\n");
    const std::vector<SmcStepRecord> s{{0, 0.0, 10.0, false, 0.0}, {1, 1.0, 7.5, true, 0.25}};
    EXPECT_EQ(smc_trace_csv(s, "d"), "# config_sha256=d\nstep,gamma,ess,resampled,acceptance_rate\n0,0,10,0,0\n1,1,7.5,1,0.25\n");
}

TEST(ModelJson, RoundTrip) {
    MoEGPModel m;
    m.experts = 1;
    m.mixing = MixingCoefficients::uniform(1);
    m.standardizer = {75.0, 43.3};
    m.provenance = "digest";
    m.ensemble.dim = 8;
    for (int i = 0; i < 16; ++i)
        m.ensemble.values.push_back(0.1 * i - 0.77);
    m.ensemble.weights = {0.25, 0.75};
    m.ensemble.gamma = 1.0;
    m.ensemble.step_index = 50;
    m.ensemble.rng_state_digest = 0xFFFFFFFFFFFFFFF1ULL;
    const json j = model_to_json(m);
    const auto back = model_from_json(json::parse(j.dump()));
    EXPECT_EQ(back.ensemble.values, m.ensemble.values);
    EXPECT_EQ(back.ensemble.weights, m.ensemble.weights);
    EXPECT_EQ(back.ensemble.rng_state_digest, m.ensemble.rng_state_digest);
    EXPECT_EQ(back.standardizer.scale, 43.3);
    EXPECT_EQ(back.provenance, "digest");
    EXPECT_EQ(model_to_json(back).dump(), j.dump());
}

TEST(ModelJson, Rejections) {
    MoEGPModel m;
    m.ensemble.dim = 8;
    m.ensemble.values.assign(8, 0.0);
    m.ensemble.weights = {1.0};
    json j = model_to_json(m);
    j["schema"] = "other/1";
    EXPECT_THROW(model_from_json(j), Error);
    j = model_to_json(m);
    j["experts"] = 2;
    EXPECT_THROW(model_from_json(j), Error);
    j = model_to_json(m);
    j.erase("weights");
    EXPECT_THROW(model_from_json(j), Error);
}

TEST(FormatNumber, ShortestRoundTrip) {
    EXPECT_EQ(fmt_num(0.1), "0.1");
    EXPECT_EQ(fmt_num(150.0), "150");
    EXPECT_EQ(std::stod(fmt_num(1.0 / 3.0)), 1.0 / 3.0);
}
