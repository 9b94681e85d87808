#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "vfield/checkpoint.hpp"
#include "vfield/errors.hpp"

using namespace vfield;
using namespace vfield::agent;

namespace {

TrainConfig small() {
  TrainConfig cfg;
  cfg.hidden_width = 8;
  cfg.batch_size = 8;
  cfg.buffer_capacity = 64;
  return cfg;
}

std::unique_ptr<AgentBundle> trained_bundle(int obs_dim = 2) {
  Rng rng(21);
  auto b = std::make_unique<AgentBundle>(BundleShape{obs_dim, 2, 0.1}, small(), rng);
  for (int i = 0; i < 32; ++i) b->buffer.add(Vec::Random(obs_dim), 0.1 * Vec::Random(2), 1.0, Vec::Random(obs_dim), false);
  for (int i = 0; i < 3; ++i) update(*b, b->buffer.sample(8, rng), rng);
  b->env_steps = 123;
  return b;
}

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("checkpoint round trip restores every tensor and counter") {
  auto a = trained_bundle();
  const auto path = temp_file("vfield_roundtrip.vfck");
  save_checkpoint(*a, path, "abc123");
  auto b = load_checkpoint(path, 2, small());
  CHECK(b->env_steps == 123);
  CHECK(b->updates == 3);
  CHECK(b->actor_opt.steps() == 3);
  auto ta = a->named_tensors();
  auto tb = b->named_tensors();
  REQUIRE(ta.size() == tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) {
    CHECK(ta[i].first == tb[i].first);
    CHECK(*ta[i].second == *tb[i].second);
  }
  CHECK(read_checkpoint(path).metadata.at("config_hash") == "abc123");
  // Saving the restored learner gives the same bytes.
  CHECK(serialize_bundle(*a, "abc123") == serialize_bundle(*b, "abc123"));
  std::filesystem::remove(path);
}

TEST_CASE("encode and decode are inverse") {
  CheckpointContents c;
  c.metadata["k"] = "v";
  c.tensors.push_back({"t", {2, 3}, {1, 2, 3, 4, 5, 6}});
  const auto d = decode_checkpoint(encode_checkpoint(c));
  CHECK(d.metadata == c.metadata);
  REQUIRE(d.tensors.size() == 1);
  CHECK(d.tensors[0].shape == c.tensors[0].shape);
  CHECK(d.tensors[0].data == c.tensors[0].data);
  c.tensors[0].data.pop_back();
  CHECK_THROWS_AS(encode_checkpoint(c), InvalidInput);
}

TEST_CASE("truncated or corrupted checkpoints are rejected") {
  auto a = trained_bundle();
  const std::string bytes = serialize_bundle(*a, "");
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, bytes.size() / 2, bytes.size() - 1}) {
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, cut)), CorruptFile);
  }
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  CHECK_THROWS_AS(decode_checkpoint(flipped), CorruptFile);
}

TEST_CASE("newer format versions are refused") {
  CheckpointContents c;
  c.version = kCheckpointVersion + 1;
  CHECK_THROWS_AS(decode_checkpoint(encode_checkpoint(c)), VersionMismatch);
}

TEST_CASE("shape mismatches leave the learner untouched") {
  auto wide = trained_bundle(3);
  const auto contents = decode_checkpoint(serialize_bundle(*wide, ""));
  auto narrow = trained_bundle(2);
  const Matrix before = *narrow->named_tensors().front().second;
  CHECK_THROWS_AS(restore_bundle(*narrow, contents), ShapeMismatch);
  CHECK(*narrow->named_tensors().front().second == before);

  const auto path = temp_file("vfield_wide.vfck");
  save_checkpoint(*wide, path);
  CHECK_THROWS_AS(load_checkpoint(path, 2), ShapeMismatch);
  CHECK(load_checkpoint(path, 3)->shape.obs_dim == 3);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(temp_file("vfield_missing.vfck")), CheckpointError);
}
