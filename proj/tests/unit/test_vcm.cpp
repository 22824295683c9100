#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "aolcorr/vcm.hpp"
#include "test_support.hpp"

namespace aolcorr {
namespace {

VcmRecord sample_record(int id = 25544, double epoch = 0.0) {
  VcmRecord r;
  r.norad_id = id;
  r.epoch = epoch;
  const StateVector s = elements_to_cart(test::circular(kEarthRadius + 420.0, test::deg(51.6), 0.3, 0.7));
  r.position = s.position;
  r.velocity = s.velocity;
  r.ballistic_coefficient = 0.013;
  r.srp_coefficient = 0.002;
  r.geopotential_degree = 4;
  r.drag_model = "EXPONENTIAL";
  r.f10 = 141.2;
  r.f10a = 150.3;
  r.sigma_rsw = {0.012, 0.0147, 0.009, 2e-4, 0.0, 1e-4};
  return r;
}

std::string line_of(const VcmRecord& r) {
  std::ostringstream os;
  const std::vector<VcmRecord> v{r};
  write_vcm(os, v);
  return os.str();
}

VcmFormatError::Kind parse_failure(const std::string& text) {
  std::istringstream in(text);
  try {
    parse_vcm(in);
  } catch (const VcmFormatError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no VcmFormatError for: " << text;
  return VcmFormatError::Kind::MalformedLine;
}

TEST(Vcm, RoundTrip) {
  const VcmRecord r = sample_record();
  std::istringstream in(line_of(r) + line_of(sample_record(25544, 3600.0)));
  const auto recs = parse_vcm(in);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].norad_id, 25544);
  EXPECT_EQ(recs[0].position, r.position);
  EXPECT_EQ(recs[0].velocity, r.velocity);
  EXPECT_EQ(recs[0].ballistic_coefficient, r.ballistic_coefficient);
  EXPECT_EQ(recs[0].drag_model, "EXPONENTIAL");
  EXPECT_EQ(recs[0].geopotential_degree, 4);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(recs[0].sigma_rsw[k], r.sigma_rsw[k]);
  EXPECT_NEAR(recs[0].sigma_rsw[3], 2e-4, 1e-15);
  EXPECT_EQ(recs[1].epoch, 3600.0);
}

TEST(Vcm, VelocitySigmaQuantization) {
  EXPECT_EQ(quantize_velocity_sigma(4e-5), 0.0);  // 0.04 m/s
  EXPECT_NEAR(quantize_velocity_sigma(2.26e-4), 2e-4, 1e-15);  // 0.226 m/s
  EXPECT_NEAR(quantize_velocity_sigma(2.6e-4), 3e-4, 1e-15);
  VcmRecord r = sample_record();
  r.sigma_rsw[3] = 4e-5;
  std::istringstream in(line_of(r));
  EXPECT_EQ(parse_vcm(in)[0].sigma_rsw[3], 0.0);
}

TEST(Vcm, VelocitySigmaFloor) {
  VcmRecord r = sample_record();
  r.sigma_rsw = {0.01, 0.01, 0.01, 0.0, 2e-4, 0.0};
  const VcmRecord f = floor_velocity_sigmas(r);
  EXPECT_EQ(f.sigma_rsw[3], 5e-5);
  EXPECT_EQ(f.sigma_rsw[4], 2e-4);
  EXPECT_EQ(f.sigma_rsw[5], 5e-5);
  EXPECT_EQ(f.sigma_rsw[0], 0.01);
  r.sigma_rsw[4] = 0.0;
  for (int k = 3; k < 6; ++k) EXPECT_EQ(floor_velocity_sigmas(r).sigma_rsw[k], 5e-5);
}

TEST(Vcm, RejectsMalformedInput) {
  using K = VcmFormatError::Kind;
  EXPECT_EQ(parse_failure("{not json\n"), K::MalformedLine);
  EXPECT_EQ(parse_failure("[1,2]\n"), K::MalformedLine);

  std::string missing = line_of(sample_record());
  missing.replace(missing.find("\"f10a\""), 6, "\"f10b\"");
  EXPECT_EQ(parse_failure(missing), K::MissingField);

  std::string bad = line_of(sample_record());
  bad.replace(bad.find("\"drag_model\":\"EXPONENTIAL\""), 26, "\"drag_model\":7");
  EXPECT_EQ(parse_failure(bad), K::MalformedValue);

  EXPECT_EQ(parse_failure(line_of(sample_record(1, 100.0)) + line_of(sample_record(1, 100.0))),
            K::NonMonotoneEpoch);

  VcmRecord below = sample_record();
  below.position *= 0.5;
  EXPECT_EQ(parse_failure(line_of(below)), K::InvalidState);
}

TEST(Vcm, EpochOrderIsPerSatellite) {
  std::istringstream in(line_of(sample_record(1, 100.0)) + line_of(sample_record(2, 50.0)) +
                        line_of(sample_record(1, 200.0)));
  EXPECT_EQ(parse_vcm(in).size(), 3u);
}

TEST(RswSigmas, IsotropicIsFrameInvariant) {
  VcmRecord r = sample_record();
  r.sigma_rsw = {0.02, 0.02, 0.02, 3e-4, 3e-4, 3e-4};
  const Mat6 p = rsw_sigmas_to_eci_cov(r).matrix;
  Mat6 expected = Mat6::Zero();
  expected.topLeftCorner<3, 3>() = 4e-4 * Mat3::Identity();
  expected.bottomRightCorner<3, 3>() = 9e-8 * Mat3::Identity();
  EXPECT_LT((p - expected).norm(), 1e-18);
}

TEST(RswSigmas, ZeroSigmasGiveZeroMatrix) {
  VcmRecord r = sample_record();
  r.sigma_rsw = {};
  EXPECT_EQ(rsw_sigmas_to_eci_cov(r).matrix, Mat6::Zero());
}

TEST(RswSigmas, AlongTrackAlignsWithVelocity) {
  VcmRecord r = sample_record();
  r.sigma_rsw = {0.0, 0.5, 0.0, 0.0, 0.0, 0.0};
  const Covariance6 p = rsw_sigmas_to_eci_cov(r);
  EXPECT_EQ(p.frame, Frame::Eci);
  Eigen::SelfAdjointEigenSolver<Mat3> es(p.matrix.topLeftCorner<3, 3>());
  const Vec3 major = es.eigenvectors().col(2);
  EXPECT_NEAR(std::abs(major.dot(r.velocity.normalized())), 1.0, 1e-9);
  EXPECT_NEAR(es.eigenvalues()(2), 0.25, 1e-15);
}

TEST(RswSigmas, AlwaysSymmetricPsd) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    VcmRecord r = sample_record();
    const StateVector s = elements_to_cart(test::random_leo(rng));
    r.position = s.position;
    r.velocity = s.velocity;
    for (int j = 0; j < 6; ++j) r.sigma_rsw[j] = (j < 3 ? 0.1 : 1e-4) * u(rng);
    const Covariance6 p = rsw_sigmas_to_eci_cov(r);
    EXPECT_EQ(p.matrix, p.matrix.transpose());
    EXPECT_NO_THROW(p.validate());
  }
}

std::vector<CatalogRow> sample_catalog() {
  return {
      {25544, "ISS (ZARYA)", ObjectType::Payload, RcsSize::Large, 550.0},
      {44713, "STARLINK-1234", ObjectType::Payload, RcsSize::Large, 550.0},
      {50001, "CUBESAT-X", ObjectType::Payload, RcsSize::Small, 550.0},
      {50002, "OneWeb-0101", ObjectType::Payload, RcsSize::Large, 600.0},
      {50003, "SL-16 R/B", ObjectType::RocketBody, RcsSize::Large, 830.0},
      {50004, "FENGYUN 1C DEB", ObjectType::Debris, RcsSize::Large, 800.0},
      {50005, "HIGH SAT", ObjectType::Payload, RcsSize::Large, 1200.0},
      {50006, "NO RCS", ObjectType::Payload, std::nullopt, 500.0},
  };
}

TEST(CatalogFilter, Criteria) {
  const auto rows = sample_catalog();
  const CatalogFilterResult res = filter_catalog(rows);
  EXPECT_EQ(res.norad_ids, (std::vector<int>{25544, 50003}));
  EXPECT_EQ(res.incomplete, 1u);
}

TEST(CatalogFilter, IdempotentAndOrderPreserving) {
  const auto rows = sample_catalog();
  const auto first = filter_catalog(rows).norad_ids;
  std::vector<CatalogRow> kept;
  for (const auto& r : rows) {
    if (std::find(first.begin(), first.end(), r.norad_id) != first.end()) kept.push_back(r);
  }
  EXPECT_EQ(filter_catalog(kept).norad_ids, first);
}

TEST(CatalogCsv, ParsesSatcatColumns) {
  std::istringstream in(
      "OBJECT_NAME,NORAD_CAT_ID,EXTRA,OBJECT_TYPE,RCS_SIZE,PERIGEE\n"
      "\"ISS (ZARYA)\",25544,x,PAYLOAD,LARGE,413\n"
      "STARLINK-1234,44713,x,PAYLOAD,LARGE,550\n"
      "THING,1,x,UNKNOWN,,\n");
  const auto rows = parse_catalog_csv(in);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].object_name, "ISS (ZARYA)");
  EXPECT_EQ(rows[0].norad_id, 25544);
  EXPECT_EQ(*rows[0].rcs_size, RcsSize::Large);
  EXPECT_DOUBLE_EQ(*rows[0].perigee_altitude, 413.0);
  EXPECT_FALSE(rows[2].rcs_size.has_value());
  EXPECT_EQ(filter_catalog(rows).norad_ids, std::vector<int>{25544});
}

SyntheticSatellite test_satellite(double span_days) {
  SyntheticSatellite sat;
  sat.norad_id = 90001;
  sat.name = "SYN-90001";
  sat.elements = test::circular(kEarthRadius + 550.0, test::deg(53.0), 0.2, 0.1);
  sat.span = span_days * kSecondsPerDay;
  return sat;
}

TEST(Synthesize, NoiseFreeRecordsLieOnTruth) {
  TrackingProfile tp;
  tp.inject_noise = false;
  tp.jitter_fraction = 0.0;
  const SyntheticSeries s = synthesize_vcm_series(test_satellite(7.0), tp, {}, PropagatorSettings{}, 1);
  ASSERT_EQ(s.records.size(), 22u);
  for (std::size_t k = 0; k < s.records.size(); ++k) {
    EXPECT_DOUBLE_EQ(s.records[k].epoch, 8.0 * 3600.0 * k);
    EXPECT_EQ(s.records[k].position, s.truth[k].position);
    EXPECT_EQ(s.records[k].velocity, s.truth[k].velocity);
    EXPECT_DOUBLE_EQ(s.records[k].ballistic_coefficient, test_satellite(7.0).truth_force.ballistic_coefficient);
  }
}

TEST(Synthesize, PositionNoiseMatchesSigma) {
  TrackingProfile tp;
  tp.cadence = 600.0;
  const SyntheticSeries s = synthesize_vcm_series(test_satellite(7.0), tp, {}, PropagatorSettings{}, 9);
  ASSERT_GE(s.records.size(), 1000u);
  double sum_sq = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < s.records.size(); ++k) {
    const Vec3 d = eci_to_rsw(s.truth[k]).to_rsw(Vec3(s.records[k].position - s.truth[k].position));
    for (int a = 0; a < 3; ++a) sum_sq += d(a) * d(a);
    n += 3;
  }
  EXPECT_NEAR(std::sqrt(sum_sq / n), 0.015, 0.2 * 0.015);
}

TEST(Synthesize, EpochsIncreaseWithinJitter) {
  TrackingProfile tp;
  const SyntheticSeries s = synthesize_vcm_series(test_satellite(7.0), tp, {}, PropagatorSettings{}, 3);
  for (std::size_t k = 1; k < s.records.size(); ++k) {
    const double gap = s.records[k].epoch - s.records[k - 1].epoch;
    EXPECT_GT(gap, 0.0);
    EXPECT_LE(gap, tp.cadence * (1.0 + 2 * tp.jitter_fraction) + 1e-9);
  }
}

TEST(Synthesize, BiasedBallisticCoefficientIsReported) {
  SyntheticSatellite sat = test_satellite(1.0);
  sat.reported_bc_bias = 1.2;
  const SyntheticSeries s = synthesize_vcm_series(sat, TrackingProfile{}, {}, PropagatorSettings{}, 3);
  for (const auto& r : s.records) EXPECT_DOUBLE_EQ(r.ballistic_coefficient, 1.2 * sat.truth_force.ballistic_coefficient);
}

TEST(Synthesize, Deterministic) {
  const SyntheticSeries a = synthesize_vcm_series(test_satellite(2.0), TrackingProfile{}, {}, PropagatorSettings{}, 5);
  const SyntheticSeries b = synthesize_vcm_series(test_satellite(2.0), TrackingProfile{}, {}, PropagatorSettings{}, 5);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t k = 0; k < a.records.size(); ++k) EXPECT_EQ(line_of(a.records[k]), line_of(b.records[k]));
}

}  // namespace
}  // namespace aolcorr
