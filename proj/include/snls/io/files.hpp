#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "snls/diagnostics.hpp"
#include "snls/field.hpp"

namespace snls::io {

static_assert(std::endian::native == std::endian::little, "snapshot and checksum code assumes a little-endian host");

inline const char* const kTimeSeriesHeader = "t,mass,energy,h1_norm,xgamma_norm,f_norm,proj_loss_cum";

/// %.17g: round-trips every double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes a CSV with a fixed header and numeric rows; UNIX newlines, binary mode.
inline void write_csv(const std::filesystem::path& path, const std::string& header,
                      const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << header << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << format_double(row[i]);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline void write_timeseries(const std::filesystem::path& path, const Trajectory& traj) {
  std::vector<std::vector<double>> rows;
  rows.reserve(traj.records.size());
  for (const auto& r : traj.records)
    rows.push_back({r.time, r.mass, r.energy, r.h1_norm, r.xgamma_norm, r.f_norm, r.proj_loss_cum});
  write_csv(path, kTimeSeriesHeader, rows);
}

/// Parses a numeric CSV written by write_csv; returns the header and rows.
inline std::pair<std::string, std::vector<std::vector<double>>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string header, line;
  std::getline(in, header);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const auto comma = line.find(',', pos);
      const auto end = comma == std::string::npos ? line.size() : comma;
      row.push_back(std::stod(line.substr(pos, end - pos)));
      pos = end + 1;
    }
    rows.push_back(std::move(row));
  }
  return {header, rows};
}

// Snapshot layout, all little-endian:
//   "SNLS" | u16 version | u32 d | u32 N | f64 L | N^d x (f64 re, f64 im) spectral coefficients in mode order.
inline constexpr std::uint16_t kSnapshotVersion = 1;

inline void write_snapshot(const std::filesystem::path& path, const Field& u) {
  const Field spec = to_spectral(u);
  const Grid& g = spec.grid();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::uint16_t version = kSnapshotVersion;
  const std::uint32_t d = static_cast<std::uint32_t>(g.dim());
  const std::uint32_t n = static_cast<std::uint32_t>(g.points());
  const double length = g.length();
  out.write("SNLS", 4);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&d), sizeof d);
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(&length), sizeof length);
  // std::complex<double> is layout-compatible with double[2].
  out.write(reinterpret_cast<const char*>(spec.values().data()),
            static_cast<std::streamsize>(spec.size() * sizeof(cplx)));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline Field read_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  char magic[4];
  std::uint16_t version = 0;
  std::uint32_t d = 0, n = 0;
  double length = 0.0;
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "SNLS", 4) != 0) throw std::runtime_error(path.string() + ": not a snapshot file");
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (version != kSnapshotVersion) throw std::runtime_error(path.string() + ": unsupported snapshot version");
  in.read(reinterpret_cast<char*>(&d), sizeof d);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  in.read(reinterpret_cast<char*>(&length), sizeof length);
  Field f(Grid::create(static_cast<int>(d), static_cast<int>(n), length), Representation::spectral);
  in.read(reinterpret_cast<char*>(f.values().data()), static_cast<std::streamsize>(f.size() * sizeof(cplx)));
  if (!in) throw std::runtime_error(path.string() + ": truncated snapshot");
  return f;
}

inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256 initialisation failed");
  }
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

}  // namespace snls::io
