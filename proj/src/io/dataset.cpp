#include "dancerl/io/dataset.hpp"

#include <map>

#include "dancerl/core/errors.hpp"
#include "dancerl/io/checkpoint.hpp"

namespace dancerl {

namespace {
constexpr std::string_view kMagic{"DRLDEMO\0", 8};
constexpr std::uint32_t kVersion = 1;
}  // namespace

std::uint64_t env_digest(const EnvConfig& env) {
  ByteWriter w;
  for (int v : {env.horizon, env.feature_dim, env.codes_per_half, env.styles, env.beat_period})
    w.i32(v);
  for (double v : {env.p_hold, env.p_change_on_beat, env.p_style, env.beat_change_bonus,
                   env.offbeat_change_penalty, env.agreement_bonus, env.style_bonus})
    w.f64(v);
  return fnv1a(w.bytes());
}

void save_demo_set(const std::filesystem::path& path, const RankedDemoSet& set,
                   const EnvConfig& env) {
  if (set.levels.size() != set.buckets.size()) throw ContractError("demo set levels/buckets mismatch");
  ByteWriter w;
  w.raw(kMagic);
  w.u32(kVersion);
  w.u64(env_digest(env));
  w.u64(set.seed);
  w.str(set.source_checkpoint);
  w.u32(static_cast<std::uint32_t>(set.levels.size()));
  for (double l : set.levels) w.f64(l);
  for (const auto& bucket : set.buckets) {
    w.u32(static_cast<std::uint32_t>(bucket.size()));
    for (const Trajectory& t : bucket) {
      if (!t.track) throw ContractError("save_demo_set: trajectory without track");
      w.u64(t.track->seed);
      w.i32(t.track->length);
      w.i32(t.track->beat_period);
      w.u8(t.noise.has_value());
      w.f64(t.noise.value_or(0.0));
      w.u32(static_cast<std::uint32_t>(t.poses.size()));
      for (PoseCode p : t.poses) {
        w.i32(p.upper);
        w.i32(p.lower);
      }
      w.u32(static_cast<std::uint32_t>(t.behavior_logp.size()));
      for (double v : t.behavior_logp) w.f64(v);
    }
  }
  w.u64(fnv1a(w.bytes()));
  write_file(path, w.bytes());
}

RankedDemoSet load_demo_set(const std::filesystem::path& path, const EnvConfig& env) {
  const std::string bytes = read_file(path);
  const std::string what = "dataset " + path.string();
  if (bytes.size() < kMagic.size() + 8 || std::string_view(bytes).substr(0, 8) != kMagic)
    throw IoError(what + ": bad magic");
  const std::string_view body = std::string_view(bytes).substr(0, bytes.size() - 8);
  if (ByteReader(std::string_view(bytes).substr(bytes.size() - 8), what).u64() != fnv1a(body))
    throw IoError(what + ": checksum mismatch");
  ByteReader r(body, what);
  r.raw(kMagic.size());
  if (r.u32() != kVersion) throw IoError(what + ": unsupported version");
  if (r.u64() != env_digest(env))
    throw ConfigError(what + ": written under a different env configuration");
  RankedDemoSet set;
  set.seed = r.u64();
  set.source_checkpoint = r.str();
  const std::uint32_t levels = r.u32();
  for (std::uint32_t i = 0; i < levels; ++i) set.levels.push_back(r.f64());
  std::map<std::uint64_t, TrackPtr> tracks;
  for (std::uint32_t i = 0; i < levels; ++i) {
    std::vector<Trajectory> bucket(r.u32());
    for (Trajectory& t : bucket) {
      const std::uint64_t seed = r.u64();
      const int length = r.i32();
      const int beat_period = r.i32();
      auto& track = tracks[seed];
      if (!track) track = std::make_shared<const MusicTrack>(generate_music(env, length, beat_period, seed));
      if (track->length != length || track->beat_period != beat_period)
        throw IoError(what + ": inconsistent track records for one seed");
      t.track = track;
      const bool has_noise = r.u8() != 0;
      const double noise = r.f64();
      if (has_noise) t.noise = noise;
      const std::uint32_t poses = r.u32();
      if (poses != static_cast<std::uint32_t>(length) + 1)
        throw IoError(what + ": trajectory length does not match its track");
      t.poses.resize(poses);
      for (PoseCode& p : t.poses) {
        p.upper = r.i32();
        p.lower = r.i32();
        if (p.upper < 0 || p.lower < 0 || p.upper >= env.codes_per_half || p.lower >= env.codes_per_half)
          throw IoError(what + ": pose code outside codebook");
      }
      t.behavior_logp.resize(r.u32());
      for (double& v : t.behavior_logp) v = r.f64();
    }
    set.buckets.push_back(std::move(bucket));
  }
  if (!r.done()) throw IoError(what + ": trailing bytes");
  return set;
}

void save_trajectories(const std::filesystem::path& path, const std::vector<Trajectory>& trajs,
                       const EnvConfig& env) {
  RankedDemoSet set;
  set.levels = {0.0};
  set.buckets = {trajs};
  save_demo_set(path, set, env);
}

std::vector<Trajectory> load_trajectories(const std::filesystem::path& path, const EnvConfig& env) {
  RankedDemoSet set = load_demo_set(path, env);
  if (set.buckets.size() != 1) throw IoError(path.string() + ": expected a single trajectory list");
  return std::move(set.buckets.front());
}

}  // namespace dancerl
