#include "aolcorr/vcm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <random>

#include "aolcorr/csv.hpp"

namespace aolcorr {

using nlohmann::json;

std::string to_string(ObjectType t) {
  switch (t) {
    case ObjectType::Payload:
      return "PAYLOAD";
    case ObjectType::RocketBody:
      return "ROCKET BODY";
    case ObjectType::Debris:
      return "DEBRIS";
    case ObjectType::Unknown:
      return "UNKNOWN";
  }
  return "UNKNOWN";
}

namespace {

std::string upper_trimmed(std::string_view s) {
  std::string out;
  for (char c : s) out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  const auto b = out.find_first_not_of(' ');
  if (b == std::string::npos) return {};
  const auto e = out.find_last_not_of(' ');
  return out.substr(b, e - b + 1);
}

}  // namespace

std::optional<ObjectType> parse_object_type(std::string_view s) {
  const std::string u = upper_trimmed(s);
  if (u == "PAYLOAD") return ObjectType::Payload;
  if (u == "ROCKET BODY") return ObjectType::RocketBody;
  if (u == "DEBRIS") return ObjectType::Debris;
  if (u == "UNKNOWN" || u == "TBA") return ObjectType::Unknown;
  return std::nullopt;
}

std::string to_string(RcsSize s) {
  switch (s) {
    case RcsSize::Small:
      return "SMALL";
    case RcsSize::Medium:
      return "MEDIUM";
    case RcsSize::Large:
      return "LARGE";
  }
  return "SMALL";
}

std::optional<RcsSize> parse_rcs_size(std::string_view s) {
  const std::string u = upper_trimmed(s);
  if (u == "SMALL") return RcsSize::Small;
  if (u == "MEDIUM") return RcsSize::Medium;
  if (u == "LARGE") return RcsSize::Large;
  return std::nullopt;
}

double quantize_velocity_sigma(double sigma_km_s) {
  const double tenths_mps = std::round(sigma_km_s * 1e4);
  return tenths_mps / 1e4;
}

namespace {

using Kind = VcmFormatError::Kind;

const json& require(const json& obj, const char* key, long line) {
  const auto it = obj.find(key);
  if (it == obj.end()) {
    throw VcmFormatError(Kind::MissingField, std::string("VCM: missing field '") + key + "'", line);
  }
  return *it;
}

double number(const json& obj, const char* key, long line) {
  const json& v = require(obj, key, line);
  if (!v.is_number()) {
    throw VcmFormatError(Kind::MalformedValue, std::string("VCM: field '") + key + "' is not a number", line);
  }
  const double d = v.get<double>();
  if (!std::isfinite(d)) {
    throw VcmFormatError(Kind::MalformedValue, std::string("VCM: field '") + key + "' is not finite", line);
  }
  return d;
}

int integer(const json& obj, const char* key, long line) {
  const json& v = require(obj, key, line);
  if (!v.is_number_integer()) {
    throw VcmFormatError(Kind::MalformedValue, std::string("VCM: field '") + key + "' is not an integer", line);
  }
  return v.get<int>();
}

template <std::size_t N>
std::array<double, N> number_array(const json& obj, const char* key, long line) {
  const json& v = require(obj, key, line);
  if (!v.is_array() || v.size() != N) {
    throw VcmFormatError(Kind::MalformedValue,
                         std::string("VCM: field '") + key + "' must be an array of " + std::to_string(N) +
                             " numbers",
                         line);
  }
  std::array<double, N> out{};
  for (std::size_t k = 0; k < N; ++k) {
    if (!v[k].is_number() || !std::isfinite(v[k].get<double>())) {
      throw VcmFormatError(Kind::MalformedValue, std::string("VCM: field '") + key + "' has a non-numeric entry",
                           line);
    }
    out[k] = v[k].get<double>();
  }
  return out;
}

VcmRecord record_from_json(const json& obj, long line) {
  VcmRecord r;
  r.norad_id = integer(obj, "norad_id", line);
  r.epoch = number(obj, "epoch_s", line);
  const auto pos = number_array<3>(obj, "r_eci_km", line);
  const auto vel = number_array<3>(obj, "v_eci_km_s", line);
  r.position = Vec3(pos[0], pos[1], pos[2]);
  r.velocity = Vec3(vel[0], vel[1], vel[2]);
  r.ballistic_coefficient = number(obj, "bc_m2_kg", line);
  r.srp_coefficient = number(obj, "srp_m2_kg", line);
  r.geopotential_degree = integer(obj, "geopot_degree", line);
  const json& drag = require(obj, "drag_model", line);
  if (!drag.is_string()) throw VcmFormatError(Kind::MalformedValue, "VCM: field 'drag_model' is not a string", line);
  r.drag_model = drag.get<std::string>();
  r.f10 = number(obj, "f10", line);
  r.f10a = number(obj, "f10a", line);
  const auto sig = number_array<6>(obj, "sigma_rsw", line);
  for (std::size_t k = 0; k < 3; ++k) r.sigma_rsw[k] = sig[k];
  for (std::size_t k = 3; k < 6; ++k) r.sigma_rsw[k] = sig[k] * 1e-3;  // m/s -> km/s
  for (double s : r.sigma_rsw) {
    if (s < 0.0) throw VcmFormatError(Kind::MalformedValue, "VCM: negative sigma", line);
  }
  if (!is_valid_leo(r.state())) {
    throw VcmFormatError(Kind::InvalidState, "VCM: position/velocity outside valid LEO range", line);
  }
  return r;
}

json record_to_json(const VcmRecord& r) {
  json sig = json::array();
  for (std::size_t k = 0; k < 3; ++k) sig.push_back(r.sigma_rsw[k]);
  for (std::size_t k = 3; k < 6; ++k) {
    // one decimal in m/s
    sig.push_back(std::round(r.sigma_rsw[k] * 1e4) / 10.0);
  }
  json obj = json::object();
  obj["norad_id"] = r.norad_id;
  obj["epoch_s"] = r.epoch;
  obj["r_eci_km"] = {r.position.x(), r.position.y(), r.position.z()};
  obj["v_eci_km_s"] = {r.velocity.x(), r.velocity.y(), r.velocity.z()};
  obj["bc_m2_kg"] = r.ballistic_coefficient;
  obj["srp_m2_kg"] = r.srp_coefficient;
  obj["geopot_degree"] = r.geopotential_degree;
  obj["drag_model"] = r.drag_model;
  obj["f10"] = r.f10;
  obj["f10a"] = r.f10a;
  obj["sigma_rsw"] = sig;
  return obj;
}

}  // namespace

std::vector<VcmRecord> parse_vcm(std::istream& in) {
  std::vector<VcmRecord> out;
  std::string line;
  long line_no = 0;
  while (csv::read_line(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw VcmFormatError(Kind::MalformedLine, std::string("VCM: invalid JSON: ") + e.what(), line_no);
    }
    if (!obj.is_object()) throw VcmFormatError(Kind::MalformedLine, "VCM: line is not a JSON object", line_no);
    VcmRecord rec = record_from_json(obj, line_no);
    if (!out.empty() && out.back().norad_id == rec.norad_id && !(rec.epoch > out.back().epoch)) {
      throw VcmFormatError(Kind::NonMonotoneEpoch, "VCM: epochs must strictly increase per satellite", line_no);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<VcmRecord> parse_vcm_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open VCM file " + path.string());
  return parse_vcm(in);
}

void write_vcm(std::ostream& out, std::span<const VcmRecord> records) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

void write_vcm_file(const std::filesystem::path& path, std::span<const VcmRecord> records) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write VCM file " + path.string());
  write_vcm(out, records);
}

VcmRecord floor_velocity_sigmas(VcmRecord rec, double floor) {
  for (std::size_t k = 3; k < 6; ++k) {
    if (rec.sigma_rsw[k] == 0.0) rec.sigma_rsw[k] = floor;
  }
  return rec;
}

Covariance6 rsw_sigmas_to_rsw_cov(const VcmRecord& rec) {
  Vec6 var;
  for (int k = 0; k < 6; ++k) var(k) = rec.sigma_rsw[static_cast<std::size_t>(k)] * rec.sigma_rsw[static_cast<std::size_t>(k)];
  return Covariance6{var.asDiagonal(), Frame::Rsw};
}

Covariance6 rsw_sigmas_to_eci_cov(const VcmRecord& rec) {
  const Mat6 rot = eci_to_rsw(rec.state()).block();
  const Mat6 p_rsw = rsw_sigmas_to_rsw_cov(rec).matrix;
  return Covariance6{symmetrize(rot.transpose() * p_rsw * rot), Frame::Eci};
}

std::vector<CatalogRow> parse_catalog_csv(std::istream& in) {
  std::string line;
  if (!csv::read_line(in, line)) throw ParseError("catalog: empty file");
  const auto header = csv::split_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t k = 0; k < header.size(); ++k) col[upper_trimmed(header[k])] = k;
  for (const char* name : {"NORAD_CAT_ID", "OBJECT_NAME", "OBJECT_TYPE", "RCS_SIZE", "PERIGEE"}) {
    if (!col.count(name)) throw ParseError(std::string("catalog: missing column ") + name, 1);
  }

  std::vector<CatalogRow> rows;
  long line_no = 1;
  while (csv::read_line(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto f = csv::split_line(line);
    auto field = [&](const char* name) -> std::string {
      const std::size_t k = col[name];
      return k < f.size() ? f[k] : std::string{};
    };
    CatalogRow row;
    try {
      row.norad_id = static_cast<int>(csv::parse_int(field("NORAD_CAT_ID")));
    } catch (const ParseError&) {
      throw ParseError("catalog: bad NORAD_CAT_ID", line_no);
    }
    row.object_name = field("OBJECT_NAME");
    row.object_type = parse_object_type(field("OBJECT_TYPE"));
    row.rcs_size = parse_rcs_size(field("RCS_SIZE"));
    const std::string perigee = field("PERIGEE");
    if (perigee.find_first_not_of(' ') != std::string::npos) {
      try {
        row.perigee_altitude = csv::parse_double(perigee);
      } catch (const ParseError&) {
        throw ParseError("catalog: bad PERIGEE", line_no);
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<CatalogRow> parse_catalog_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open catalog " + path.string());
  return parse_catalog_csv(in);
}

void write_catalog_csv(std::ostream& out, std::span<const CatalogRow> rows) {
  out << "NORAD_CAT_ID,OBJECT_NAME,OBJECT_TYPE,RCS_SIZE,PERIGEE\n";
  for (const auto& r : rows) {
    out << r.norad_id << ',' << csv::escape(r.object_name) << ','
        << (r.object_type ? csv::escape(to_string(*r.object_type)) : "") << ','
        << (r.rcs_size ? to_string(*r.rcs_size) : "") << ','
        << (r.perigee_altitude ? csv::format_double(*r.perigee_altitude) : "") << '\n';
  }
}

CatalogFilterResult filter_catalog(std::span<const CatalogRow> rows) {
  CatalogFilterResult res;
  for (const auto& r : rows) {
    if (!r.object_type || !r.rcs_size || !r.perigee_altitude || r.object_name.empty()) {
      ++res.incomplete;
      continue;
    }
    const std::string name = upper_trimmed(r.object_name);
    const bool constellation =
        name.find("STARLINK") != std::string::npos || name.find("ONEWEB") != std::string::npos;
    if (*r.rcs_size == RcsSize::Large && *r.perigee_altitude < 1200.0 && *r.object_type != ObjectType::Debris &&
        !constellation) {
      res.norad_ids.push_back(r.norad_id);
    }
  }
  return res;
}

SpaceWeather SpaceWeatherHistory::at(double epoch) const {
  SpaceWeather sw;
  if (f10) sw.f10 = f10->at(epoch);
  if (f10a) sw.f10a = f10a->at(epoch);
  return sw;
}

SyntheticSeries synthesize_vcm_series(const SyntheticSatellite& sat, const TrackingProfile& tracking,
                                      const SpaceWeatherHistory& weather, const PropagatorSettings& settings,
                                      std::uint64_t seed) {
  if (!(tracking.cadence > 0.0)) throw InvalidInput("synthesize_vcm_series: cadence must be > 0");
  if (!(tracking.jitter_fraction >= 0.0 && tracking.jitter_fraction < 0.5)) {
    throw InvalidInput("synthesize_vcm_series: jitter fraction must be in [0, 0.5)");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-tracking.jitter_fraction, tracking.jitter_fraction);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double t0 = sat.start_epoch;
  const double t1 = t0 + sat.span;
  const auto n = static_cast<std::size_t>(std::floor(sat.span / tracking.cadence + 1e-9)) + 1;
  std::vector<double> epochs;
  epochs.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double nominal = t0 + static_cast<double>(k) * tracking.cadence;
    const double j = tracking.jitter_fraction > 0.0 ? jitter(rng) : 0.0;
    epochs.push_back(std::clamp(nominal + j * tracking.cadence, t0, t1));
  }

  const StateVector s0 = elements_to_cart(sat.elements, t0);
  const auto states = propagate_to_epochs(s0, sat.truth_force, settings, epochs, weather.at(t0));

  SyntheticSeries out;
  for (std::size_t k = 0; k < epochs.size(); ++k) {
    if (!states[k]) throw DecayError(epochs[k], kDecayAltitudeKm);
    const StateVector& truth = *states[k];
    const RotationEciRsw rot = eci_to_rsw(truth);

    Vec3 dr = Vec3::Zero(), dv = Vec3::Zero();
    double along_extra = 0.0;
    if (tracking.inject_noise) {
      Vec3 dr_rsw, dv_rsw;
      for (int a = 0; a < 3; ++a) dr_rsw(a) = tracking.sigma_position * gauss(rng);
      for (int a = 0; a < 3; ++a) dv_rsw(a) = tracking.sigma_velocity * gauss(rng);
      dr = rot.to_eci(dr_rsw);
      dv = rot.to_eci(dv_rsw);
      if (tracking.energy_consistent) {
        const double r = truth.position.norm();
        const double v2 = truth.velocity.squaredNorm();
        const double d_energy = kMu * truth.position.dot(dr) / (r * r * r);
        dv -= (d_energy / v2) * truth.velocity;
      }
    }
    if (tracking.energy_consistent) {
      const double r = truth.position.norm();
      along_extra = kMu / (r * r) / truth.velocity.norm() * tracking.sigma_position;
    }

    VcmRecord rec;
    rec.norad_id = sat.norad_id;
    rec.epoch = truth.epoch;
    rec.position = truth.position + dr;
    rec.velocity = truth.velocity + dv;
    rec.ballistic_coefficient = sat.truth_force.ballistic_coefficient * sat.reported_bc_bias;
    rec.srp_coefficient = sat.truth_force.srp_enabled ? sat.truth_force.srp_coefficient : 0.0;
    rec.geopotential_degree = sat.truth_force.zonal_degree;
    rec.drag_model = "EXPONENTIAL";
    const SpaceWeather sw = weather.at(truth.epoch);
    rec.f10 = sw.f10;
    rec.f10a = sw.f10a;
    rec.sigma_rsw = {tracking.sigma_position,
                     tracking.sigma_position,
                     tracking.sigma_position,
                     quantize_velocity_sigma(tracking.sigma_velocity),
                     quantize_velocity_sigma(std::hypot(tracking.sigma_velocity, along_extra)),
                     quantize_velocity_sigma(tracking.sigma_velocity)};
    out.records.push_back(std::move(rec));
    out.truth.push_back(truth);
  }
  return out;
}

}  // namespace aolcorr
