#include "mvtrack/synth.hpp"

#include <algorithm>
#include <random>

#include "mvtrack/distance.hpp"

namespace mvtrack {

void SyntheticSpec::Validate() const {
  if (n_identities < 2) throw ValueError("SyntheticSpec: need at least two identities");
  if (tracks_per_identity < 1) throw ValueError("SyntheticSpec: tracks_per_identity < 1");
  if (frames_min < 1 || frames_max < frames_min)
    throw ValueError("SyntheticSpec: bad frames range");
  if (dim < 2) throw ValueError("SyntheticSpec: dim < 2");
  if (n_videos < 1) throw ValueError("SyntheticSpec: n_videos < 1");
  if (noise_sigma < 0.0 || distortion < 0.0 || pose_strength < 0.0)
    throw ValueError("SyntheticSpec: corruption strengths must be >= 0");
  if (pose_shift_prob < 0.0 || pose_shift_prob > 1.0)
    throw ValueError("SyntheticSpec: pose_shift_prob must be in [0, 1]");
  if (n_poses < 1) throw ValueError("SyntheticSpec: n_poses < 1");
  if (cooccurrence_density < 0.0 || cooccurrence_density > 1.0)
    throw ValueError("SyntheticSpec: cooccurrence_density must be in [0, 1]");
}

namespace {

VectorD RandomUnit(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  VectorD v(dim);
  for (int i = 0; i < dim; ++i) v(i) = gauss(rng);
  return l2_normalize(v);
}

struct TrackPlan {
  int identity = 0;
  int frames = 0;
  int dominant_pose = 0;
  VectorD distortion_offset;  // strength * G * prototype, fixed per track
};

std::string IdentityName(int identity) {
  std::string num = std::to_string(identity);
  return "id" + std::string(num.size() < 3 ? 3 - num.size() : 0, '0') + num;
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  spec.Validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  std::vector<VectorD> prototypes, poses;
  for (int i = 0; i < spec.n_identities; ++i) prototypes.push_back(RandomUnit(spec.dim, rng));
  for (int i = 0; i < spec.n_poses; ++i) poses.push_back(RandomUnit(spec.dim, rng));

  // Per-track plans; identity counts drive the scene grouping below.
  std::vector<TrackPlan> plans;
  std::uniform_int_distribution<int> frame_count(spec.frames_min, spec.frames_max);
  std::uniform_int_distribution<int> pose_pick(0, spec.n_poses - 1);
  for (int id = 0; id < spec.n_identities; ++id) {
    for (int t = 0; t < spec.tracks_per_identity; ++t) {
      TrackPlan plan;
      plan.identity = id;
      plan.frames = frame_count(rng);
      plan.dominant_pose = pose_pick(rng);
      VectorD direction(spec.dim);
      for (int r = 0; r < spec.dim; ++r) direction(r) = gauss(rng);
      plan.distortion_offset =
          spec.distortion * (direction / std::sqrt(static_cast<double>(spec.dim)));
      plans.push_back(std::move(plan));
    }
  }

  // Scene grouping: repeatedly draw 2-3 tracks of pairwise distinct
  // identities, preferring identities with the most unplaced tracks so no
  // identity is stranded. Tracks of a scene share their start frame,
  // which guarantees mutual co-occurrence.
  std::vector<std::vector<std::size_t>> id_pool(spec.n_identities);
  for (std::size_t i = 0; i < plans.size(); ++i)
    id_pool[plans[i].identity].push_back(i);
  for (auto& pool : id_pool) std::shuffle(pool.begin(), pool.end(), rng);

  auto richest = [&](const std::vector<int>& skip) {
    int best = -1;
    std::size_t best_count = 0;
    for (int id = 0; id < spec.n_identities; ++id) {
      if (std::find(skip.begin(), skip.end(), id) != skip.end()) continue;
      if (id_pool[id].size() > best_count) {
        best_count = id_pool[id].size();
        best = id;
      }
    }
    return best;
  };

  struct Scene {
    std::vector<std::size_t> members;
    std::vector<int> identities;
  };
  std::vector<Scene> scenes;
  std::vector<std::size_t> leftovers;
  while (true) {
    std::vector<int> used;
    Scene scene;
    const int want = 2 + (uni(rng) < spec.cooccurrence_density ? 1 : 0);
    for (int s = 0; s < want; ++s) {
      const int id = richest(used);
      if (id < 0) break;
      used.push_back(id);
      scene.members.push_back(id_pool[id].back());
      scene.identities.push_back(id);
      id_pool[id].pop_back();
    }
    if (scene.members.size() >= 2) {
      scenes.push_back(std::move(scene));
    } else {
      for (std::size_t m : scene.members) leftovers.push_back(m);
      break;
    }
  }
  // Stranded tracks (a single identity outlasting all others) join an
  // existing scene that does not contain their identity.
  for (std::size_t m : leftovers) {
    const int id = plans[m].identity;
    bool placed = false;
    for (Scene& scene : scenes) {
      if (std::find(scene.identities.begin(), scene.identities.end(), id) ==
          scene.identities.end()) {
        scene.members.push_back(m);
        scene.identities.push_back(id);
        placed = true;
        break;
      }
    }
    if (!placed)
      throw ValueError("generate_synthetic: cannot place track without a same-scene partner");
  }

  // Lay scenes onto per-video timelines and synthesize frames.
  const int gap_frames = 12;
  std::vector<std::int64_t> cursor(spec.n_videos, 0);
  std::vector<std::vector<float>> frame_data(spec.n_videos);  // column-major staging
  std::vector<std::int64_t> col_cursor(spec.n_videos, 0);
  std::vector<FaceTrack> tracks;
  TrackId next_track_id = 0;

  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const int video = static_cast<int>(s % spec.n_videos);
    const std::int64_t start = cursor[video];
    std::int64_t longest = 0;
    for (std::size_t m : scenes[s].members) {
      const TrackPlan& plan = plans[m];
      FaceTrack t;
      t.track_id = next_track_id++;
      t.video_id = "synth" + std::to_string(video);
      t.frame_start = start;
      t.frame_end = start + plan.frames - 1;
      t.col_start = col_cursor[video];
      t.col_end = col_cursor[video] + plan.frames - 1;
      t.label = IdentityName(plan.identity);
      col_cursor[video] += plan.frames;
      longest = std::max<std::int64_t>(longest, plan.frames);

      const VectorD& proto = prototypes[plan.identity];
      for (int f = 0; f < plan.frames; ++f) {
        int pose = plan.dominant_pose;
        if (spec.pose_shift_prob > 0.0 && uni(rng) < spec.pose_shift_prob)
          pose = pose_pick(rng);
        VectorD frame = proto + plan.distortion_offset + spec.pose_strength * poses[pose];
        if (spec.noise_sigma > 0.0)
          for (int r = 0; r < spec.dim; ++r) frame(r) += spec.noise_sigma * gauss(rng);
        for (int r = 0; r < spec.dim; ++r)
          frame_data[video].push_back(static_cast<float>(frame(r)));
      }
      tracks.push_back(std::move(t));
    }
    cursor[video] = start + longest + gap_frames;
  }

  SyntheticCorpus corpus;
  for (int v = 0; v < spec.n_videos; ++v) {
    if (col_cursor[v] == 0) continue;
    MatrixF data = Eigen::Map<MatrixF>(frame_data[v].data(), spec.dim,
                                       static_cast<int>(col_cursor[v]));
    corpus.embeddings.emplace("synth" + std::to_string(v),
                              EmbeddingMatrix::FromData(std::move(data)));
  }
  corpus.tracks = TrackSet(std::move(tracks));
  for (const FaceTrack& t : corpus.tracks.tracks())
    corpus.tracks.ValidateColumns(t.video_id, corpus.embeddings.at(t.video_id));
  return corpus;
}

}  // namespace mvtrack
