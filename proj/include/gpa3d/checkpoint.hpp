#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>

#include "gpa3d/detector_head.hpp"
#include "gpa3d/prototypes.hpp"

namespace gpa3d {

// Little-endian binary checkpoint:
//   magic "GPA3", u32 version, u32 stat_dim, u32 feature_dim, u32 k_groups
//   (0 when no prototypes follow), then f64 arrays in declared order:
//   encoder weight, encoder bias, cls weight, cls bias, reg weight, reg bias,
//   prototypes ((k_groups + 1) x feature_dim) when present.

namespace ckpt_detail {

constexpr char kMagic[4] = {'G', 'P', 'A', '3'};
constexpr std::uint32_t kVersion = 1;

inline void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

inline void write_doubles(std::ostream& out, const double* data, std::size_t n) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

inline void read_doubles(std::istream& in, double* data, std::size_t n) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

}  // namespace ckpt_detail

inline void save_checkpoint(const std::string& path, const DetectorModel& model,
                            const PrototypeBank* bank = nullptr) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(ckpt_detail::kMagic, 4);
  ckpt_detail::write_u32(out, ckpt_detail::kVersion);
  ckpt_detail::write_u32(out, kStatDim);
  const int fd = model.feature_dim();
  ckpt_detail::write_u32(out, static_cast<std::uint32_t>(fd));
  ckpt_detail::write_u32(out, bank ? static_cast<std::uint32_t>(bank->k_groups) : 0);
  ckpt_detail::write_doubles(out, model.encoder.weight.a.data(),
                             model.encoder.weight.a.size());
  ckpt_detail::write_doubles(out, model.encoder.bias.data(), model.encoder.bias.size());
  ckpt_detail::write_doubles(out, model.head.cls_weight.data(),
                             model.head.cls_weight.size());
  ckpt_detail::write_doubles(out, &model.head.cls_bias, 1);
  ckpt_detail::write_doubles(out, model.head.reg_weight.a.data(),
                             model.head.reg_weight.a.size());
  ckpt_detail::write_doubles(out, model.head.reg_bias.data(), model.head.reg_bias.size());
  if (bank) {
    for (const auto& v : bank->vectors) {
      ckpt_detail::write_doubles(out, v.data(), v.size());
    }
  }
  if (!out) throw std::runtime_error("short write to '" + path + "'");
}

struct LoadedCheckpoint {
  DetectorModel model;  // grid left at defaults; callers set it from config
  std::optional<PrototypeBank> bank;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, ckpt_detail::kMagic, 4) != 0) {
    throw std::runtime_error("'" + path + "' is not a checkpoint file");
  }
  const std::uint32_t version = ckpt_detail::read_u32(in);
  if (version != ckpt_detail::kVersion) {
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));
  }
  const std::uint32_t stat_dim = ckpt_detail::read_u32(in);
  if (stat_dim != kStatDim) {
    throw std::runtime_error("checkpoint statistic dimension mismatch");
  }
  const std::uint32_t fd = ckpt_detail::read_u32(in);
  const std::uint32_t k_groups = ckpt_detail::read_u32(in);
  LoadedCheckpoint loaded;
  DetectorModel& m = loaded.model;
  m.encoder.weight = Matrix(static_cast<int>(fd), kStatDim);
  m.encoder.bias.assign(fd, 0.0);
  m.head.cls_weight.assign(fd, 0.0);
  m.head.reg_weight = Matrix(kRegDim, static_cast<int>(fd));
  m.head.reg_bias.assign(kRegDim, 0.0);
  ckpt_detail::read_doubles(in, m.encoder.weight.a.data(), m.encoder.weight.a.size());
  ckpt_detail::read_doubles(in, m.encoder.bias.data(), m.encoder.bias.size());
  ckpt_detail::read_doubles(in, m.head.cls_weight.data(), m.head.cls_weight.size());
  ckpt_detail::read_doubles(in, &m.head.cls_bias, 1);
  ckpt_detail::read_doubles(in, m.head.reg_weight.a.data(), m.head.reg_weight.a.size());
  ckpt_detail::read_doubles(in, m.head.reg_bias.data(), m.head.reg_bias.size());
  if (k_groups > 0) {
    PrototypeBank bank;
    bank.k_groups = static_cast<int>(k_groups);
    bank.feature_dim = static_cast<int>(fd);
    bank.vectors.assign(k_groups + 1, std::vector<double>(fd, 0.0));
    for (auto& v : bank.vectors) {
      ckpt_detail::read_doubles(in, v.data(), v.size());
    }
    loaded.bank = std::move(bank);
  }
  if (!in) throw std::runtime_error("truncated checkpoint '" + path + "'");
  return loaded;
}

}  // namespace gpa3d
