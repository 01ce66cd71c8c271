#pragma once

// Snapshot container:
//
//   8 bytes   magic "TXRAYSNP"
//   4 bytes   header length N, little-endian uint32
//   N bytes   JSON header (format_version, stage_id, dims, seed, hyperparams,
//             vocab, arrays)
//   ...       little-endian float32 arrays, in the order listed under
//             "arrays"; matrices are column-major (embedding: one column of
//             `embed` floats per token)

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "txray/encoder.hpp"
#include "txray/error.hpp"

namespace txray {

namespace detail {

inline constexpr std::array<char, 8> kSnapshotMagic = {'T', 'X', 'R', 'A', 'Y', 'S', 'N', 'P'};

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw ParseError("snapshot truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

template <class M>
void write_floats(std::ostream& out, const M& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(m.data()[i]));
}

template <class M>
void read_floats(std::istream& in, M& m, const std::string& name) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    try {
      m.data()[i] = std::bit_cast<float>(get_u32(in));
    } catch (const ParseError&) {
      throw ParseError("snapshot truncated inside array '" + name + "'");
    }
  }
}

}  // namespace detail

inline void write_snapshot(std::ostream& out, const Snapshot& s) {
  const auto& p = s.params;
  nlohmann::json arrays = nlohmann::json::array();
  p.for_each_block([&](const char* name, const auto& m) {
    arrays.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  });
  if (s.head) {
    arrays.push_back({{"name", "head_weight"}, {"rows", p.hidden}, {"cols", 1}});
    arrays.push_back({{"name", "head_bias"}, {"rows", 1}, {"cols", 1}});
  }
  const nlohmann::json header = {
      {"format_version", s.format_version},
      {"stage_id", s.stage_id},
      {"dims", {{"vocab", p.vocab}, {"embed", p.embed}, {"hidden", p.hidden}}},
      {"seed", p.seed},
      {"hyperparams", s.hyperparams},
      {"vocab", s.vocab},
      {"has_head", s.head.has_value()},
      {"arrays", arrays},
  };
  const std::string text = header.dump();
  out.write(detail::kSnapshotMagic.data(), detail::kSnapshotMagic.size());
  detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  p.for_each_block([&](const char*, const auto& m) { detail::write_floats(out, m); });
  if (s.head) {
    detail::write_floats(out, s.head->weight);
    detail::put_u32(out, std::bit_cast<std::uint32_t>(s.head->bias));
  }
}

inline Snapshot read_snapshot(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != detail::kSnapshotMagic) {
    throw ParseError("not a snapshot file (bad magic)");
  }
  const std::uint32_t len = detail::get_u32(in);
  std::string text(len, '\0');
  if (!in.read(text.data(), len)) throw ParseError("snapshot header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("snapshot header is not valid JSON: ") + e.what());
  }
  Snapshot s;
  try {
    s.format_version = header.at("format_version").get<int>();
    if (s.format_version != Snapshot::kFormatVersion) {
      throw ParseError("unsupported snapshot format_version " + std::to_string(s.format_version));
    }
    s.stage_id = header.at("stage_id").get<std::string>();
    const auto& dims = header.at("dims");
    const int vocab = dims.at("vocab").get<int>();
    const int embed = dims.at("embed").get<int>();
    const int hidden = dims.at("hidden").get<int>();
    if (vocab < 1 || embed < 1 || hidden < 1) throw ParseError("snapshot dims must be positive");
    s.hyperparams = header.at("hyperparams");
    s.vocab = header.at("vocab").get<std::vector<std::string>>();
    if (!s.vocab.empty() && s.vocab.size() != static_cast<std::size_t>(vocab)) {
      throw ParseError("snapshot vocab list has " + std::to_string(s.vocab.size()) + " entries, dims say " +
                       std::to_string(vocab));
    }
    auto& p = s.params;
    EncoderParams<float> shape;
    shape.vocab = vocab;
    shape.embed = embed;
    shape.hidden = hidden;
    p = EncoderParams<float>::zeros_like(shape);
    p.seed = header.at("seed").get<std::uint64_t>();
    const auto& arrays = header.at("arrays");
    std::size_t k = 0;
    p.for_each_block([&](const char* name, auto& m) {
      if (k >= arrays.size() || arrays[k].at("name").get<std::string>() != name ||
          arrays[k].at("rows").get<Eigen::Index>() != m.rows() || arrays[k].at("cols").get<Eigen::Index>() != m.cols()) {
        throw ParseError(std::string("snapshot array table disagrees with dims at '") + name + "'");
      }
      ++k;
    });
    p.for_each_block([&](const char* name, auto& m) { detail::read_floats(in, m, name); });
    if (header.at("has_head").get<bool>()) {
      ClassifierHead<float> head;
      head.weight.resize(hidden);
      detail::read_floats(in, head.weight, "head_weight");
      Eigen::Matrix<float, 1, 1> b;
      detail::read_floats(in, b, "head_bias");
      head.bias = b(0);
      s.head = std::move(head);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed snapshot header: ") + e.what());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError("trailing bytes after snapshot arrays");
  if (!s.params.all_finite()) throw ParseError("snapshot contains non-finite parameters");
  return s;
}

inline void save_snapshot(const std::string& path, const Snapshot& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write snapshot " + path);
  write_snapshot(out, s);
}

inline Snapshot load_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open snapshot " + path);
  return read_snapshot(in);
}

}  // namespace txray
