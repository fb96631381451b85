#include "voc/trajectory.hpp"

#include <cstring>
#include <limits>

#include "voc/error.hpp"
#include "voc/io.hpp"

namespace voc {

namespace {
constexpr char kMagic[4] = {'V', 'O', 'C', 'D'};
constexpr uint32_t kVersion = 1;
}  // namespace

void Trajectory::validate() const {
  if (frames.size() < 2) throw InvalidInputError("trajectory needs at least 2 frames");
  if (actions.size() != frames.size() - 1 || rewards.size() != frames.size() - 1) {
    throw InvalidInputError("trajectory: len(actions) and len(rewards) must be len(frames)-1");
  }
  for (const Frame& f : frames) {
    if (!f.same_shape(frames.front()) ||
        f.px.size() != static_cast<std::size_t>(f.h) * f.w * f.c) {
      throw InvalidInputError("trajectory frames must share one shape");
    }
  }
  if (state_ids && state_ids->size() != frames.size()) {
    throw InvalidInputError("state_ids must have one entry per frame");
  }
}

void Dataset::validate() const {
  for (const Trajectory& t : trajectories) {
    t.validate();
    const Frame& f = t.frames.front();
    if (f.h != h_px || f.w != w_px || f.c != channels) {
      throw InvalidInputError("trajectory frame shape disagrees with dataset header");
    }
  }
}

std::vector<uint8_t> Dataset::serialize() const {
  validate();
  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<uint32_t>(trajectories.size()));
  put_u16(out, static_cast<uint16_t>(h_px));
  put_u16(out, static_cast<uint16_t>(w_px));
  put_u8(out, static_cast<uint8_t>(channels));
  put_u8(out, 0);  // reserved
  for (const Trajectory& t : trajectories) {
    put_u32(out, static_cast<uint32_t>(t.frames.size()));
    for (const Frame& f : t.frames) out.insert(out.end(), f.px.begin(), f.px.end());
    for (int a : t.actions) put_u16(out, static_cast<uint16_t>(a));
    for (double r : t.rewards) put_f32(out, static_cast<float>(r));
    put_u8(out, t.state_ids ? 1 : 0);
    if (t.state_ids) {
      for (uint32_t s : *t.state_ids) put_u32(out, s);
    }
  }
  return out;
}

Dataset Dataset::deserialize(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes);
  auto magic = r.bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw IoError("not a trajectory dataset file");
  uint32_t version = r.u32();
  if (version != kVersion) {
    throw UnsupportedDatasetError("unsupported dataset version " + std::to_string(version));
  }
  uint32_t n_traj = r.u32();
  Dataset ds;
  ds.h_px = r.u16();
  ds.w_px = r.u16();
  ds.channels = r.u8();
  r.u8();  // reserved
  std::size_t frame_bytes = static_cast<std::size_t>(ds.h_px) * ds.w_px * ds.channels;
  ds.trajectories.reserve(n_traj);
  for (uint32_t i = 0; i < n_traj; ++i) {
    uint32_t len = r.u32();
    if (len < 2) throw IoError("trajectory record shorter than 2 frames");
    Trajectory t;
    t.frames.reserve(len);
    for (uint32_t j = 0; j < len; ++j) {
      Frame f;
      f.h = ds.h_px;
      f.w = ds.w_px;
      f.c = ds.channels;
      auto px = r.bytes(frame_bytes);
      f.px.assign(px.begin(), px.end());
      t.frames.push_back(std::move(f));
    }
    t.actions.reserve(len - 1);
    for (uint32_t j = 0; j + 1 < len; ++j) t.actions.push_back(r.u16());
    t.rewards.reserve(len - 1);
    for (uint32_t j = 0; j + 1 < len; ++j) t.rewards.push_back(r.f32());
    if (r.u8() == 1) {
      std::vector<uint32_t> ids(len);
      for (auto& s : ids) s = r.u32();
      t.state_ids = std::move(ids);
    }
    ds.trajectories.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw IoError("trailing bytes after dataset payload");
  ds.validate();
  return ds;
}

void Dataset::save(const std::string& path) const {
  auto bytes = serialize();
  write_file(path, std::span<const uint8_t>(bytes));
}

Dataset Dataset::load(const std::string& path) { return deserialize(read_file(path)); }

Dataset generate_dataset(const GridWorld& env, const Policy& policy, int n_traj, int traj_len,
                         uint64_t seed) {
  env.validate();
  policy.validate();
  if (n_traj < 1 || traj_len < 2) {
    throw InvalidInputError("generate_dataset needs n_traj >= 1 and traj_len >= 2");
  }
  std::vector<int> starts;
  for (int s = 0; s < env.n_states(); ++s) {
    if (s != env.state_id_of(env.goal_pos)) starts.push_back(s);
  }
  if (starts.empty()) throw ConfigError("no non-goal start cells");

  Dataset ds;
  ds.h_px = env.h_px;
  ds.w_px = env.w_px;
  ds.channels = 1;
  ds.trajectories.reserve(n_traj);
  for (int i = 0; i < n_traj; ++i) {
    Rng rng = Rng::substream(seed, static_cast<uint64_t>(i));
    GridWorld cur = env;
    cur.agent_pos = env.cell_of(starts[rng.uniform_int(starts.size())]);
    Trajectory t;
    std::vector<uint32_t> ids;
    t.frames.push_back(render(cur));
    ids.push_back(static_cast<uint32_t>(cur.state_id()));
    for (int step_idx = 0; step_idx + 1 < traj_len; ++step_idx) {
      int a = policy.sample_action(cur, step_idx, rng);
      StepResult res = step(cur, a, rng);
      cur = res.env;
      t.actions.push_back(a);
      t.rewards.push_back(res.reward);
      t.frames.push_back(render(cur));
      ids.push_back(static_cast<uint32_t>(cur.state_id()));
      if (res.done) break;
    }
    t.state_ids = std::move(ids);
    ds.trajectories.push_back(std::move(t));
  }
  ds.validate();
  return ds;
}

}  // namespace voc
