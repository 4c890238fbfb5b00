#include "adlm/checkpoint.hpp"

#include "adlm/errors.hpp"

#include <cstring>
#include <fstream>

namespace adlm {

namespace {

constexpr char kMagic[8] = {'a', 'd', 'l', 'm', 'c', 'k', 'p', 't'};

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw format_error("truncated checkpoint");
  return value;
}

}  // namespace

const Eigen::MatrixXd& Checkpoint::array(const std::string& name) const {
  for (const auto& [n, m] : arrays)
    if (n == name) return m;
  throw format_error("checkpoint is missing array: " + name);
}

bool Checkpoint::has_array(const std::string& name) const {
  for (const auto& [n, m] : arrays)
    if (n == name) return true;
  return false;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw format_error("cannot write file: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(out, kVersion);
  write_pod<std::uint64_t>(out, vocab_hash);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, m] : arrays) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint32_t>(out, 0);  // dtype 0 = f64
    write_pod<std::uint32_t>(out, 2);  // rank
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) write_pod<double>(out, m(r, c));
  }
  write_pod<std::uint32_t>(out,
                           static_cast<std::uint32_t>(config_snapshot.size()));
  out.write(config_snapshot.data(),
            static_cast<std::streamsize>(config_snapshot.size()));
  if (!out) throw format_error("failed writing checkpoint: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error("cannot read file: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw format_error("not a checkpoint file: " + path);
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion)
    throw format_error("unsupported checkpoint version " +
                       std::to_string(version) + " (expected " +
                       std::to_string(kVersion) + ")");
  Checkpoint ckpt;
  ckpt.vocab_hash = read_pod<std::uint64_t>(in);
  const auto n_arrays = read_pod<std::uint32_t>(in);
  for (std::uint32_t a = 0; a < n_arrays; ++a) {
    const auto name_len = read_pod<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto dtype = read_pod<std::uint32_t>(in);
    if (dtype != 0) throw format_error("unsupported array dtype");
    const auto rank = read_pod<std::uint32_t>(in);
    if (rank != 2) throw format_error("unsupported array rank");
    const auto rows = read_pod<std::uint64_t>(in);
    const auto cols = read_pod<std::uint64_t>(in);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows),
                      static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = read_pod<double>(in);
    ckpt.arrays.emplace_back(std::move(name), std::move(m));
  }
  const auto cfg_len = read_pod<std::uint32_t>(in);
  ckpt.config_snapshot.resize(cfg_len);
  in.read(ckpt.config_snapshot.data(), cfg_len);
  if (!in) throw format_error("truncated checkpoint");
  return ckpt;
}

}  // namespace adlm
