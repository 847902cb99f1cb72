// src/checkpoint.cc

// Copyright 2026  The cvdetect Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <cmath>

#include "cvdetect/error.h"
#include "cvdetect/extractor.h"
#include "cvdetect/io-util.h"

namespace cvdetect {

namespace {

constexpr char kCheckpointMagic[] = "CVCK";
constexpr char kEmbeddingMagic[] = "CVEM";
constexpr uint32_t kVersion = 1;

void PutConfig(ByteWriter &w, const ExtractorConfig &c) {
  w.PutI32(c.input_dim);
  w.PutI32(c.num_layers);
  w.PutI32(c.hidden_units);
  w.PutI32(c.embedding_dim);
  w.PutI32(c.num_classes);
  w.PutF64(c.dropout);
  w.PutF64(c.learning_rate);
  w.PutF64(c.weight_decay);
  w.PutI32(c.batch_size);
  w.PutI32(c.epochs);
  w.PutI32(c.pairs_per_sample);
  w.PutU64(c.seed);
  w.PutF64(c.task_weight);
  w.PutU32(c.pooling == Pooling::kMean ? 1 : 0);
}

ExtractorConfig GetConfig(ByteReader &r) {
  ExtractorConfig c;
  c.input_dim = r.GetI32();
  c.num_layers = r.GetI32();
  c.hidden_units = r.GetI32();
  c.embedding_dim = r.GetI32();
  c.num_classes = r.GetI32();
  c.dropout = r.GetF64();
  c.learning_rate = r.GetF64();
  c.weight_decay = r.GetF64();
  c.batch_size = r.GetI32();
  c.epochs = r.GetI32();
  c.pairs_per_sample = r.GetI32();
  c.seed = r.GetU64();
  c.task_weight = r.GetF64();
  uint32_t pooling = r.GetU32();
  if (pooling > 1) r.Fail("unknown pooling mode");
  c.pooling = pooling == 1 ? Pooling::kMean : Pooling::kFinalStates;
  return c;
}

void PutDoubles(ByteWriter &w, const std::vector<double> &v) {
  w.PutU32(static_cast<uint32_t>(v.size()));
  for (double x : v) w.PutF64(x);
}

std::vector<double> GetDoubles(ByteReader &r) {
  uint32_t n = r.GetU32();
  std::vector<double> v(n);
  for (auto &x : v) x = r.GetF64();
  return v;
}

uint32_t KindCode(SegmentKind kind) { return kind == SegmentKind::kC ? 0 : 1; }

SegmentKind GetKind(ByteReader &r) {
  uint32_t k = r.GetU32();
  if (k > 1) r.Fail("unknown segment kind");
  return k == 0 ? SegmentKind::kC : SegmentKind::kCV;
}

}  // namespace

std::string SerializeCheckpoint(const Checkpoint &ckpt) {
  ByteWriter w;
  w.PutBytes(kCheckpointMagic);
  w.PutU32(kVersion);
  PutConfig(w, ckpt.config);
  w.PutU32(KindCode(ckpt.kind));
  w.PutU32(static_cast<uint32_t>(ckpt.inventory.size()));
  for (const auto &label : ckpt.inventory) w.PutString(label);
  ExtractorModel model = ckpt.model;
  std::vector<Param *> params = model.Params();
  w.PutU32(static_cast<uint32_t>(params.size()));
  for (const Param *p : params) {
    w.PutU32(static_cast<uint32_t>(p->value.rows()));
    w.PutU32(static_cast<uint32_t>(p->value.cols()));
    for (double v : p->value.values()) w.PutF64(v);
  }
  PutDoubles(w, ckpt.cmvn.mean);
  PutDoubles(w, ckpt.cmvn.variance);
  w.PutU64(static_cast<uint64_t>(ckpt.cmvn.frame_count));
  w.PutF64(ckpt.log.initial_loss);
  PutDoubles(w, ckpt.log.epoch_loss);
  PutDoubles(w, ckpt.log.epoch_accuracy);
  w.PutF64(ckpt.log.final_accuracy);
  w.PutU64(static_cast<uint64_t>(ckpt.log.num_examples));
  return w.Release();
}

Checkpoint DeserializeCheckpoint(std::string_view bytes, const std::string &source) {
  ByteReader r(bytes, source);
  if (r.GetBytes(4) != kCheckpointMagic) r.Fail("not a checkpoint file");
  if (r.GetU32() != kVersion) r.Fail("unsupported checkpoint version");
  Checkpoint ckpt;
  ckpt.config = GetConfig(r);
  try {
    ckpt.config.Validate();
  } catch (const ValidationError &e) {
    r.Fail(e.what());
  }
  ckpt.kind = GetKind(r);
  uint32_t num_labels = r.GetU32();
  if (num_labels != static_cast<uint32_t>(ckpt.config.num_classes))
    r.Fail("inventory size does not match num_classes");
  for (uint32_t i = 0; i < num_labels; ++i) ckpt.inventory.push_back(r.GetString());
  ckpt.model = ExtractorModel(ckpt.config);
  std::vector<Param *> params = ckpt.model.Params();
  if (r.GetU32() != params.size()) r.Fail("parameter count does not match config");
  for (Param *p : params) {
    uint32_t rows = r.GetU32(), cols = r.GetU32();
    if (rows != static_cast<uint32_t>(p->value.rows()) ||
        cols != static_cast<uint32_t>(p->value.cols()))
      r.Fail("parameter shape does not match config");
    for (double &v : p->value.values()) {
      v = r.GetF64();
      if (!std::isfinite(v)) r.Fail("non-finite parameter value");
    }
  }
  ckpt.cmvn.mean = GetDoubles(r);
  ckpt.cmvn.variance = GetDoubles(r);
  ckpt.cmvn.frame_count = static_cast<int64_t>(r.GetU64());
  if (ckpt.cmvn.dim() != ckpt.config.input_dim ||
      ckpt.cmvn.variance.size() != ckpt.cmvn.mean.size())
    r.Fail("CMVN dimension does not match config");
  ckpt.log.initial_loss = r.GetF64();
  ckpt.log.epoch_loss = GetDoubles(r);
  ckpt.log.epoch_accuracy = GetDoubles(r);
  ckpt.log.final_accuracy = r.GetF64();
  ckpt.log.num_examples = static_cast<int64_t>(r.GetU64());
  r.ExpectEnd();
  return ckpt;
}

void SaveCheckpoint(const Checkpoint &ckpt, const std::string &path) {
  WriteFileAtomic(path, SerializeCheckpoint(ckpt));
}

Checkpoint LoadCheckpoint(const std::string &path) {
  return DeserializeCheckpoint(ReadFileToString(path), path);
}

std::string SerializeEmbeddingTable(const EmbeddingTable &table, SegmentKind kind) {
  const size_t dim = table.empty() ? 0 : table.begin()->second.size();
  ByteWriter w;
  w.PutBytes(kEmbeddingMagic);
  w.PutU32(kVersion);
  w.PutU32(KindCode(kind));
  w.PutU32(static_cast<uint32_t>(dim));
  w.PutU32(static_cast<uint32_t>(table.size()));
  for (const auto &[id, emb] : table) {
    if (emb.size() != dim)
      throw ValidationError("embedding '" + id + "' has inconsistent dimension");
    w.PutString(id);
    for (double v : emb) w.PutF64(v);
  }
  return w.Release();
}

EmbeddingTable DeserializeEmbeddingTable(std::string_view bytes, const std::string &source,
                                         SegmentKind *kind) {
  ByteReader r(bytes, source);
  if (r.GetBytes(4) != kEmbeddingMagic) r.Fail("not an embedding table");
  if (r.GetU32() != kVersion) r.Fail("unsupported embedding table version");
  SegmentKind k = GetKind(r);
  if (kind) *kind = k;
  uint32_t dim = r.GetU32(), count = r.GetU32();
  EmbeddingTable table;
  std::string prev;
  for (uint32_t i = 0; i < count; ++i) {
    std::string id = r.GetString();
    if (i > 0 && id <= prev) r.Fail("entries not sorted or duplicated at '" + id + "'");
    Embedding e(dim);
    for (double &v : e) v = r.GetF64();
    prev = id;
    table.emplace(std::move(id), std::move(e));
  }
  r.ExpectEnd();
  return table;
}

void SaveEmbeddingTable(const EmbeddingTable &table, SegmentKind kind,
                        const std::string &path) {
  WriteFileAtomic(path, SerializeEmbeddingTable(table, kind));
}

EmbeddingTable LoadEmbeddingTable(const std::string &path, SegmentKind *kind) {
  return DeserializeEmbeddingTable(ReadFileToString(path), path, kind);
}

}  // namespace cvdetect
