#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tapsphere/model.hpp"
#include "tapsphere/oracle.hpp"

namespace tapsphere {

// All reals in text formats are printed with 17 significant digits, enough to
// round-trip an IEEE-754 double.
inline std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

namespace detail {

inline void append_array(std::string& out, const double* data, long count) {
  out += '[';
  for (long i = 0; i < count; ++i) {
    if (i) out += ',';
    out += format_real(data[i]);
  }
  out += ']';
}

}  // namespace detail

// Single JSON document {config, X (row-major), beta0, eps, y}.
inline std::string instance_to_json(const Instance& inst, const ModelConfig& cfg) {
  std::string out = "{\"config\":{";
  out += "\"p\":" + std::to_string(cfg.p);
  out += ",\"n\":" + std::to_string(cfg.n);
  out += ",\"delta\":" + format_real(cfg.delta);
  out += ",\"seed\":" + std::to_string(cfg.seed);
  out += "},\"X\":";
  std::vector<double> row_major(static_cast<size_t>(inst.n()) * inst.p());
  for (int i = 0; i < inst.n(); ++i)
    for (int j = 0; j < inst.p(); ++j)
      row_major[static_cast<size_t>(i) * inst.p() + j] = inst.X(i, j);
  detail::append_array(out, row_major.data(), static_cast<long>(row_major.size()));
  out += ",\"beta0\":";
  detail::append_array(out, inst.beta0.data(), inst.p());
  out += ",\"eps\":";
  detail::append_array(out, inst.eps.data(), inst.n());
  out += ",\"y\":";
  detail::append_array(out, inst.y.data(), inst.n());
  out += "}";
  return out;
}

inline std::pair<Instance, ModelConfig> instance_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  const auto& jc = j.at("config");
  ModelConfig cfg(jc.at("p").get<int>(), jc.at("n").get<int>(), jc.at("delta").get<double>(),
                  jc.at("seed").get<std::uint64_t>());
  Instance inst;
  inst.X.resize(cfg.n, cfg.p);
  const auto& jx = j.at("X");
  for (int i = 0; i < cfg.n; ++i)
    for (int k = 0; k < cfg.p; ++k)
      inst.X(i, k) = jx.at(static_cast<size_t>(i) * cfg.p + k).get<double>();
  auto load_vec = [&](const char* key, int len) {
    Vec v(len);
    const auto& arr = j.at(key);
    for (int i = 0; i < len; ++i) v[i] = arr.at(i).get<double>();
    return v;
  };
  inst.beta0 = load_vec("beta0", cfg.p);
  inst.eps = load_vec("eps", cfg.n);
  inst.y = load_vec("y", cfg.n);
  return {inst, cfg};
}

// Binary container: magic, version, p, n, seed (little-endian u64), then
// X row-major, beta0, eps, y as little-endian float64.
inline void instance_to_binary(const Instance& inst, const ModelConfig& cfg, std::ostream& os) {
  const char magic[4] = {'T', 'A', 'P', 'S'};
  os.write(magic, 4);
  auto put_u64 = [&](std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
  };
  put_u64(1);  // version
  put_u64(static_cast<std::uint64_t>(cfg.p));
  put_u64(static_cast<std::uint64_t>(cfg.n));
  put_u64(cfg.seed);
  auto put_f64 = [&](double x) {
    std::uint64_t v;
    std::memcpy(&v, &x, 8);
    put_u64(v);
  };
  put_f64(cfg.delta);
  for (int i = 0; i < inst.n(); ++i)
    for (int j = 0; j < inst.p(); ++j) put_f64(inst.X(i, j));
  for (int i = 0; i < inst.p(); ++i) put_f64(inst.beta0[i]);
  for (int i = 0; i < inst.n(); ++i) put_f64(inst.eps[i]);
  for (int i = 0; i < inst.n(); ++i) put_f64(inst.y[i]);
}

inline std::pair<Instance, ModelConfig> instance_from_binary(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "TAPS", 4) != 0)
    throw std::runtime_error("instance_from_binary: bad magic");
  auto get_u64 = [&]() {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  };
  auto get_f64 = [&]() {
    const std::uint64_t v = get_u64();
    double x;
    std::memcpy(&x, &v, 8);
    return x;
  };
  const std::uint64_t version = get_u64();
  if (version != 1) throw std::runtime_error("instance_from_binary: unsupported version");
  const int p = static_cast<int>(get_u64());
  const int n = static_cast<int>(get_u64());
  const std::uint64_t seed = get_u64();
  const double delta = get_f64();
  ModelConfig cfg(p, n, delta, seed);
  Instance inst;
  inst.X.resize(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) inst.X(i, j) = get_f64();
  inst.beta0.resize(p);
  for (int i = 0; i < p; ++i) inst.beta0[i] = get_f64();
  inst.eps.resize(n);
  for (int i = 0; i < n; ++i) inst.eps[i] = get_f64();
  inst.y.resize(n);
  for (int i = 0; i < n; ++i) inst.y[i] = get_f64();
  if (!is) throw std::runtime_error("instance_from_binary: truncated stream");
  return {inst, cfg};
}

inline nlohmann::json to_json(const FreeEnergyEstimate& est) {
  return {{"method", to_string(est.method)},
          {"value", est.value},
          {"std_err", est.std_err},
          {"correction", est.correction}};
}

inline nlohmann::json to_json(const SecondMomentReport& rep) {
  return {{"annealed_phi", rep.annealed_phi},
          {"log_EZ2_over_p", rep.log_EZ2_over_p},
          {"log_gamma0_over_p", rep.log_gamma0_over_p},
          {"cq", rep.cq},
          {"high_temperature", rep.high_temperature}};
}

// One sweep row: p, n, delta, method, value, std_err.
inline std::string sweep_csv_header() { return "p,n,delta,method,value,std_err"; }

inline std::string sweep_csv_row(int p, int n, double delta, const FreeEnergyEstimate& est) {
  std::string out = std::to_string(p) + "," + std::to_string(n) + "," + format_real(delta) + "," +
                    to_string(est.method) + "," + format_real(est.value) + "," +
                    format_real(est.std_err);
  return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << content;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace tapsphere
