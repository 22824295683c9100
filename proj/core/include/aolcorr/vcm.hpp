#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aolcorr/error.hpp"
#include "aolcorr/propagator.hpp"

namespace aolcorr {

/// Velocity sigmas in the file carry 0.1 m/s resolution; anything reported as
/// zero is replaced by half a quantum, the largest value that rounds to zero.
inline constexpr double kVelocitySigmaQuantum = 1e-4;  // km/s
inline constexpr double kVelocitySigmaFloor = 5e-5;    // km/s

enum class ObjectType { Payload, RocketBody, Debris, Unknown };
enum class RcsSize { Small, Medium, Large };

std::string to_string(ObjectType t);
std::optional<ObjectType> parse_object_type(std::string_view s);
std::string to_string(RcsSize s);
std::optional<RcsSize> parse_rcs_size(std::string_view s);

/// One ephemeris epoch with its dynamics parameters and RSW sigmas.
struct VcmRecord {
  int norad_id = 0;
  double epoch = 0.0;  // s
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  double ballistic_coefficient = 0.0;  // m^2/kg
  double srp_coefficient = 0.0;        // m^2/kg
  int geopotential_degree = 0;
  std::string drag_model;
  double f10 = 0.0;
  double f10a = 0.0;
  std::array<double, 6> sigma_rsw{};  // km x3, km/s x3

  StateVector state() const { return StateVector{epoch, position, velocity}; }
  SpaceWeather space_weather() const { return SpaceWeather{f10, f10a}; }
};

/// Raised for malformed VCM files; `kind` separates the failure classes.
class VcmFormatError : public ParseError {
 public:
  enum class Kind { MalformedLine, MissingField, MalformedValue, NonMonotoneEpoch, InvalidState };
  VcmFormatError(Kind kind, const std::string& what, long line) : ParseError(what, line), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// JSON-lines reader/writer. Each line holds norad_id, epoch_s, r_eci_km,
/// v_eci_km_s, bc_m2_kg, srp_m2_kg, geopot_degree, drag_model, f10, f10a and
/// sigma_rsw. Inside sigma_rsw the position entries are km and the velocity
/// entries are m/s rounded to one decimal.
std::vector<VcmRecord> parse_vcm(std::istream& in);
std::vector<VcmRecord> parse_vcm_file(const std::filesystem::path& path);
void write_vcm(std::ostream& out, std::span<const VcmRecord> records);
void write_vcm_file(const std::filesystem::path& path, std::span<const VcmRecord> records);

/// Rounds a velocity sigma (km/s) to the file's 0.1 m/s resolution.
double quantize_velocity_sigma(double sigma_km_s);

VcmRecord floor_velocity_sigmas(VcmRecord rec, double floor = kVelocitySigmaFloor);

/// Uncorrelated RSW sigmas rotated into an ECI covariance at the record state.
Covariance6 rsw_sigmas_to_eci_cov(const VcmRecord& rec);
Covariance6 rsw_sigmas_to_rsw_cov(const VcmRecord& rec);

struct CatalogRow {
  int norad_id = 0;
  std::string object_name;
  std::optional<ObjectType> object_type;
  std::optional<RcsSize> rcs_size;
  std::optional<double> perigee_altitude;  // km
};

/// Space-Track satcat CSV; needs NORAD_CAT_ID, OBJECT_NAME, OBJECT_TYPE,
/// RCS_SIZE and PERIGEE columns (any order, extra columns ignored).
std::vector<CatalogRow> parse_catalog_csv(std::istream& in);
std::vector<CatalogRow> parse_catalog_file(const std::filesystem::path& path);
void write_catalog_csv(std::ostream& out, std::span<const CatalogRow> rows);

struct CatalogFilterResult {
  std::vector<int> norad_ids;
  std::size_t incomplete = 0;  // rows dropped for missing fields
};

/// Keeps large-RCS, non-debris objects with perigee below 1200 km whose name
/// does not mention STARLINK or ONEWEB.
CatalogFilterResult filter_catalog(std::span<const CatalogRow> rows);

/// Truth description of one simulated satellite.
struct SyntheticSatellite {
  int norad_id = 0;
  std::string name;
  ObjectType type = ObjectType::Payload;
  OsculatingElements elements;   // at start_epoch
  double start_epoch = 0.0;
  double span = 7.0 * kSecondsPerDay;
  ForceConfig truth_force;
  double reported_bc_bias = 1.0;  // reported Bc = truth Bc * bias
};

struct TrackingProfile {
  double cadence = 8.0 * 3600.0;  // s
  double jitter_fraction = 0.25;  // uniform +- fraction of cadence
  double sigma_position = 0.015;  // km, each RSW axis
  double sigma_velocity = 5e-7;   // km/s, each RSW axis before energy matching
  /// Adds the along-track velocity offset that keeps the perturbed state on
  /// the same energy, so position noise does not leak into semi-major axis.
  bool energy_consistent = true;
  bool inject_noise = true;
};

/// Space-weather history shared by every satellite of a simulation.
struct SpaceWeatherHistory {
  std::shared_ptr<const DailySeries> f10;
  std::shared_ptr<const DailySeries> f10a;
  SpaceWeather at(double epoch) const;
};

struct SyntheticSeries {
  std::vector<VcmRecord> records;
  std::vector<StateVector> truth;  // noise-free states at the record epochs
};

/// Samples a truth propagation at jittered epochs and perturbs each state with
/// RSW Gaussian noise. Throws DecayError when the truth orbit decays.
SyntheticSeries synthesize_vcm_series(const SyntheticSatellite& sat, const TrackingProfile& tracking,
                                      const SpaceWeatherHistory& weather, const PropagatorSettings& settings,
                                      std::uint64_t seed);

}  // namespace aolcorr
