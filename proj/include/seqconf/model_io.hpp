// seqconf/model_io.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Versioned model checkpoints. The file embeds the subword inventory so a
// checkpoint is self-contained for inference. Tensors are stored in the
// fixed collect_tensors order at the model's native scalar width.

#ifndef SEQCONF_MODEL_IO_HPP_
#define SEQCONF_MODEL_IO_HPP_

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "seqconf/corpus.hpp"
#include "seqconf/model.hpp"

namespace seqconf {

namespace detail {

inline void ck_put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t ck_get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  require(in.good(), "truncated checkpoint: " + path);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

template <typename S>
void save_model(const ModelParams<S>& params, const Vocab& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write checkpoint: " + path);
  out.write("S2SM", 4);
  detail::ck_put_u32(out, 1);  // version
  detail::ck_put_u32(out, sizeof(S));
  const ModelConfig& c = params.config;
  for (int v : {c.vocab, c.d, c.enc_layers, c.dec_layers, c.heads, c.d_ff, c.max_len})
    detail::ck_put_u32(out, static_cast<std::uint32_t>(v));
  detail::ck_put_u32(out, static_cast<std::uint32_t>(vocab.size()));
  for (const auto& unit : vocab.units()) {
    detail::ck_put_u32(out, static_cast<std::uint32_t>(unit.size()));
    out.write(unit.data(), static_cast<std::streamsize>(unit.size()));
  }
  auto& mutable_params = const_cast<ModelParams<S>&>(params);
  std::vector<TensorView<S>> views;
  collect_tensors(mutable_params, views);
  for (const auto& view : views) {
    detail::ck_put_u32(out, static_cast<std::uint32_t>(view.size));
    out.write(reinterpret_cast<const char*>(view.data),
              static_cast<std::streamsize>(view.size * sizeof(S)));
  }
  require(out.good(), "write failed: " + path);
}

template <typename S>
struct LoadedModel {
  ModelParams<S> params;
  Vocab vocab;
};

template <typename S>
LoadedModel<S> load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot read checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  require(in.good() && std::memcmp(magic, "S2SM", 4) == 0, "not a model checkpoint: " + path);
  require(detail::ck_get_u32(in, path) == 1, "unsupported checkpoint version: " + path);
  require(detail::ck_get_u32(in, path) == sizeof(S),
          "checkpoint scalar width does not match the requested scalar: " + path);
  ModelConfig cfg;
  cfg.vocab = static_cast<int>(detail::ck_get_u32(in, path));
  cfg.d = static_cast<int>(detail::ck_get_u32(in, path));
  cfg.enc_layers = static_cast<int>(detail::ck_get_u32(in, path));
  cfg.dec_layers = static_cast<int>(detail::ck_get_u32(in, path));
  cfg.heads = static_cast<int>(detail::ck_get_u32(in, path));
  cfg.d_ff = static_cast<int>(detail::ck_get_u32(in, path));
  cfg.max_len = static_cast<int>(detail::ck_get_u32(in, path));

  int n_units = static_cast<int>(detail::ck_get_u32(in, path));
  std::vector<std::string> units(n_units);
  for (auto& unit : units) {
    int len = static_cast<int>(detail::ck_get_u32(in, path));
    unit.resize(len);
    in.read(unit.data(), len);
    require(in.good(), "truncated checkpoint: " + path);
  }

  LoadedModel<S> loaded;
  loaded.vocab = Vocab::from_units(std::move(units));
  require(loaded.vocab.size() == cfg.vocab, "checkpoint vocab size mismatch: " + path);
  loaded.params = init_model<S>(cfg, /*seed=*/0);
  std::vector<TensorView<S>> views;
  collect_tensors(loaded.params, views);
  for (auto& view : views) {
    auto stored = static_cast<std::ptrdiff_t>(detail::ck_get_u32(in, path));
    require(stored == view.size, "checkpoint tensor size mismatch at " + view.name);
    in.read(reinterpret_cast<char*>(view.data),
            static_cast<std::streamsize>(view.size * sizeof(S)));
    require(in.good(), "truncated checkpoint: " + path);
  }
  return loaded;
}

// Encoder or teacher-forced decoder states for a whole split, in corpus
// order, as float32 records ready for an HSD dump.
template <typename S>
StateMatrix to_state_matrix(const Mat<S>& states, StateSide side, int sentence_id) {
  StateMatrix m;
  m.side = side;
  m.sentence_id = sentence_id;
  m.rows = states.template cast<float>();
  return m;
}

}  // namespace seqconf

#endif  // SEQCONF_MODEL_IO_HPP_
