#include "msgfield/pipeline.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <optional>

#include "json.hpp"
#include "msgfield/errors.hpp"
#include "msgfield/projection.hpp"

namespace msgfield {

namespace {

using nlohmann::json;

json v3(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }
json v4(const Vec4& v) { return json::array({v[0], v[1], v[2], v[3]}); }

Vec3 camera_position(const Camera& cam) {
  return -(rotation_matrix(cam.q).transpose() * cam.t);
}

// The robot's own belief of where the object is: subset opacity >= 0.5.
Mask object_region(const Scene& belief, const Camera& cam, const std::vector<uint8_t>& subset,
                   const RenderConfig& rc) {
  RenderOverrides ov;
  ov.subset = &subset;
  RenderChannels ch;
  ch.color = false;
  ch.opacity = true;
  const GrayImage op = render(belief, cam, ch, rc, ov).opacity;
  Mask region(op.width, op.height);
  for (size_t i = 0; i < op.data.size(); ++i) region.data[i] = op.data[i] >= 0.5 ? 1 : 0;
  return region;
}

}  // namespace

bool detect_motion(const Image& frame_prev, const Image& frame_cur, const Mask& region_mask,
                   double tau_m) {
  if (!frame_prev.same_shape(frame_cur))
    throw ShapeMismatch("motion detection frames disagree on dimensions");
  if (region_mask.width != frame_prev.width || region_mask.height != frame_prev.height)
    throw ShapeMismatch("motion detection region disagrees with the frames");

  double sum = 0.0;
  size_t count = 0;
  for (int y = 0; y < region_mask.height; ++y) {
    for (int x = 0; x < region_mask.width; ++x) {
      if (!region_mask.at(x, y)) continue;
      const double* a = frame_prev.px(x, y);
      const double* b = frame_cur.px(x, y);
      sum += (std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) + std::abs(a[2] - b[2])) / 3.0;
      ++count;
    }
  }
  if (count == 0) return false;
  return sum / static_cast<double>(count) > tau_m;
}

Camera look_at_camera(const Vec3& target, const Vec3& direction, double distance, int image_size,
                      double focal) {
  const double n = direction.norm();
  if (!(n > 1e-12)) throw DomainError("look_at_camera: zero view direction");
  const Vec3 z = direction / n;
  Vec3 seed = std::abs(z[0]) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 x = (seed - seed.dot(z) * z).normalized();
  const Vec3 y = z.cross(x);

  Mat3 r_wc;
  r_wc.row(0) = x;
  r_wc.row(1) = y;
  r_wc.row(2) = z;
  const Eigen::Quaterniond eq(r_wc);
  const Vec4 q = quat_normalized(Vec4(eq.w(), eq.x(), eq.y(), eq.z()));
  const Vec3 pos = target - distance * z;
  const double c = (image_size - 1) / 2.0;
  return make_camera(image_size, image_size, focal, focal, c, c, q, -(r_wc * pos), 0.01,
                     distance * 100.0);
}

std::optional<GraspPose> CentroidGraspProvider::propose(const std::vector<size_t>& indices,
                                                        const Scene& scene,
                                                        const std::vector<Camera>& views) const {
  if (indices.empty()) return std::nullopt;
  Vec3 centroid = Vec3::Zero();
  for (size_t i : indices) {
    if (i >= scene.size()) throw DomainError("grasp primitive index out of range");
    centroid += scene.primitives[i].mu;
  }
  centroid /= static_cast<double>(indices.size());

  const Vec3 down(0, 1, 0);
  const double axis_norm = arm_axis.norm();
  if (!(axis_norm > 1e-12)) throw DomainError("grasp arm axis must be nonzero");
  const double misalign =
      std::acos(std::clamp(down.dot(arm_axis) / axis_norm, -1.0, 1.0)) * 180.0 / EIGEN_PI;

  // Unlabeled selections cannot be ranked by occlusion; they keep the
  // downward approach.
  const int32_t label = scene.primitives[indices[0]].label;
  bool flip = misalign > max_misalign_deg;
  if (!flip && label != 0) {
    const Camera overhead = look_at_camera(centroid, down, overhead_distance);
    flip = !occluding_primitives(scene, label, overhead, occlusion_pad).empty();
  }

  Vec3 dir = down;
  if (flip && label != 0 && !views.empty()) {
    const std::vector<size_t> order = select_views(scene, label, views, occlusion_pad);
    dir = (centroid - camera_position(views[order.front()])).normalized();
  }

  GraspPose pose;
  pose.position = centroid;
  const Eigen::Quaterniond eq = Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), dir);
  pose.approach = quat_normalized(Vec4(eq.w(), eq.x(), eq.y(), eq.z()));
  return pose;
}

size_t SimWorld::frame_at(size_t tick) const {
  if (frame_at_tick.empty()) return 0;
  return frame_at_tick[std::min(tick, frame_at_tick.size() - 1)];
}

SimWorld make_world(SynthResult truth, size_t motion_start_tick) {
  SimWorld world;
  world.frame_at_tick.assign(motion_start_tick, 0);
  for (size_t f = 1; f < truth.frames.size(); ++f) world.frame_at_tick.push_back(f);
  if (world.frame_at_tick.empty()) world.frame_at_tick.push_back(0);
  world.truth = std::move(truth);
  return world;
}

ManipulateResult manipulate(SimWorld& world, const SemanticTable& table,
                            const Eigen::VectorXd& text_feature, const GraspProvider& provider,
                            const ManipulateConfig& cfg) {
  const std::vector<Camera>& cams = world.truth.cams;
  if (cams.empty() || world.truth.frames.empty())
    throw DomainError("manipulation world has no observations");

  ManipulateResult res;
  auto emit = [&res](const json& j) { res.log.push_back(j.dump()); };

  world.robot.position = world.home;
  world.robot.gripper_open = true;
  world.robot.stopped = false;
  emit({{"event", "init"}, {"position", v3(world.home)}, {"gripper", "open"}});
  emit({{"event", "input"}, {"operation", cfg.operation}});

  Scene belief = world.truth.scene;
  const QueryResult qr = query(belief, table, text_feature);
  emit({{"event", "query"}, {"label", qr.label}, {"primitives", qr.indices.size()}});

  std::vector<uint8_t> subset(belief.size(), 0);
  for (size_t i : qr.indices) subset[i] = 1;
  belief.dynamic_mask = subset;  // refits move exactly the queried object

  bool aborted = qr.indices.empty();
  GraspPose pose;
  if (!aborted) {
    const auto proposed = provider.propose(qr.indices, belief, cams);
    if (!proposed) {
      emit({{"event", "propose"}, {"status", "no_grasp"}});
      aborted = true;
    } else {
      pose = *proposed;
      emit({{"event", "propose"},
            {"position", v3(pose.position)},
            {"approach", v4(pose.approach)}});
    }
  }

  std::optional<size_t> prev_frame;
  int guard = 0;
  while (!aborted && (world.robot.position - pose.position).norm() > cfg.eps_p) {
    if (++guard > cfg.max_ticks) {
      emit({{"event", "abort"}, {"reason", "tick_limit"}});
      aborted = true;
      break;
    }
    const size_t f = world.frame_at(world.clock);
    bool moved = false;
    if (prev_frame) {
      for (size_t v = 0; v < cams.size() && !moved; ++v) {
        const Mask region = object_region(belief, cams[v], subset, cfg.fit.render);
        moved = detect_motion(world.truth.frames[*prev_frame].rgb[v], world.truth.frames[f].rgb[v],
                              region, cfg.tau_m);
      }
    }
    emit({{"event", "perceive"}, {"tick", world.clock}, {"frame", f}, {"motion", moved}});

    if (moved) {
      world.robot.stopped = true;
      ++res.stop_events;
      emit({{"event", "stop"}, {"tick", world.clock}});

      ObservationSet obs;
      for (size_t v = 0; v < cams.size(); ++v) {
        const SynthFrame& rest = world.truth.frames[*prev_frame];
        const SynthFrame& now = world.truth.frames[f];
        if (!rest.masks.count(qr.label) || !now.masks.count(qr.label))
          throw MissingObservation("no ground-truth mask stream for label " +
                                   std::to_string(qr.label));
        obs[0].push_back({rest.rgb[v], rest.masks.at(qr.label)[v]});
        obs[1].push_back({now.rgb[v], now.masks.at(qr.label)[v]});
      }
      const MotionField init =
          make_motion_field(MotionMode::kRigid, 1, {0, 1}, qr.indices.size());
      const FitResult fr = fit(belief, init, cams, obs, cfg.fit);
      belief = pose_scene(belief, fr.field, 1);
      emit({{"event", "fit"}, {"timesteps", 2}, {"final_loss", fr.frame_loss.back()}});
      emit({{"event", "update"}, {"mode", "rigid"}});

      const auto proposed = provider.propose(qr.indices, belief, cams);
      if (!proposed) {
        emit({{"event", "propose"}, {"status", "no_grasp"}});
        aborted = true;
      } else {
        pose = *proposed;
        emit({{"event", "propose"},
              {"position", v3(pose.position)},
              {"approach", v4(pose.approach)}});
      }
    } else {
      const Vec3 d = pose.position - world.robot.position;
      const double dist = d.norm();
      world.robot.position += d * (std::min(cfg.step_length, dist) / dist);
      world.robot.stopped = false;
      emit({{"event", "move"},
            {"position", v3(world.robot.position)},
            {"remaining", (pose.position - world.robot.position).norm()}});
    }
    prev_frame = f;
    ++world.clock;
  }

  const bool arrived = !aborted && (world.robot.position - pose.position).norm() <= cfg.eps_p;
  bool not_implemented = false;
  if (arrived) {
    if (cfg.operation == "grasp") {
      world.robot.gripper_open = false;
      emit({{"event", "grasp_close"}});
    } else if (cfg.operation == "place") {
      world.robot.gripper_open = true;
      emit({{"event", "grasp_open"}});
    } else {
      not_implemented = true;
      emit({{"event", "raise"},
            {"error", "NotImplementedError"},
            {"operation", cfg.operation}});
    }
  }

  res.final_position = world.robot.position;
  const auto range = world.truth.object_range.find(qr.label);
  const bool have_truth = range != world.truth.object_range.end();
  if (have_truth) {
    const SynthFrame& last = world.truth.frames[world.frame_at(world.clock)];
    Vec3 goal = Vec3::Zero();
    for (size_t i = range->second.first; i < range->second.second; ++i) goal += last.mu[i];
    goal /= static_cast<double>(range->second.second - range->second.first);
    res.goal_position = goal;
    res.final_error = (goal - world.robot.position).norm();
  }

  if (not_implemented)
    res.status = ManipulateStatus::kNotImplemented;
  else if (arrived && have_truth && res.final_error <= cfg.eps_p)
    res.status = ManipulateStatus::kSuccess;
  else
    res.status = ManipulateStatus::kFailure;

  const char* status = res.status == ManipulateStatus::kSuccess ? "success"
                       : res.status == ManipulateStatus::kFailure ? "failure"
                                                                  : "not_implemented";
  json done = {{"event", "done"},
               {"status", status},
               {"stops", res.stop_events},
               {"ticks", world.clock}};
  if (have_truth) done["error"] = res.final_error;
  emit(done);
  return res;
}

}  // namespace msgfield
