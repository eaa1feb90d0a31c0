#include "depthfill/geometry.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace depthfill {

double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

Vec3 Vec3::normalized() const {
  const double n = norm();
  if (n < 1e-300) throw std::invalid_argument("cannot normalize a zero vector");
  return {x / n, y / n, z / n};
}

int64_t Mask::count() const {
  int64_t c = 0;
  for (uint8_t v : m) c += v ? 1 : 0;
  return c;
}

// ---------------------------------------------------------------------------
// RigidTransform
// ---------------------------------------------------------------------------

namespace {

std::array<double, 16> identity_matrix() {
  return {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
}

double rotation_drift(const std::array<double, 16>& m) {
  double worst = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double dot = 0;
      for (int k = 0; k < 3; ++k) dot += m[static_cast<size_t>(k) * 4 + i] * m[static_cast<size_t>(k) * 4 + j];
      worst = std::max(worst, std::fabs(dot - (i == j ? 1.0 : 0.0)));
    }
  const double det =
      m[0] * (m[5] * m[10] - m[6] * m[9]) - m[1] * (m[4] * m[10] - m[6] * m[8]) +
      m[2] * (m[4] * m[9] - m[5] * m[8]);
  worst = std::max(worst, std::fabs(det - 1.0));
  return worst;
}

// Gram-Schmidt on the rotation columns; keeps right-handedness.
void reorthonormalize(std::array<double, 16>& m) {
  Vec3 c0{m[0], m[4], m[8]};
  Vec3 c1{m[1], m[5], m[9]};
  c0 = c0.normalized();
  c1 = (c1 - c0 * c0.dot(c1)).normalized();
  const Vec3 c2 = c0.cross(c1);
  m[0] = c0.x; m[4] = c0.y; m[8] = c0.z;
  m[1] = c1.x; m[5] = c1.y; m[9] = c1.z;
  m[2] = c2.x; m[6] = c2.y; m[10] = c2.z;
}

}  // namespace

RigidTransform::RigidTransform() : m_(identity_matrix()) {}

RigidTransform RigidTransform::from_matrix(const std::array<double, 16>& m) {
  if (m[12] != 0.0 || m[13] != 0.0 || m[14] != 0.0 || m[15] != 1.0)
    throw std::invalid_argument("RigidTransform: last row must be exactly (0,0,0,1)");
  if (rotation_drift(m) > 1e-9)
    throw std::invalid_argument("RigidTransform: rotation block is not orthonormal (det +1)");
  RigidTransform t;
  t.m_ = m;
  return t;
}

RigidTransform RigidTransform::translation(const Vec3& t) {
  RigidTransform r;
  r.m_[3] = t.x;
  r.m_[7] = t.y;
  r.m_[11] = t.z;
  return r;
}

RigidTransform RigidTransform::axis_angle(const Vec3& axis, double angle_rad, const Vec3& t) {
  const Vec3 a = axis.normalized();
  const double c = std::cos(angle_rad), s = std::sin(angle_rad), ic = 1.0 - c;
  RigidTransform r;
  auto& m = r.m_;
  m[0] = c + a.x * a.x * ic;
  m[1] = a.x * a.y * ic - a.z * s;
  m[2] = a.x * a.z * ic + a.y * s;
  m[4] = a.y * a.x * ic + a.z * s;
  m[5] = c + a.y * a.y * ic;
  m[6] = a.y * a.z * ic - a.x * s;
  m[8] = a.z * a.x * ic - a.y * s;
  m[9] = a.z * a.y * ic + a.x * s;
  m[10] = c + a.z * a.z * ic;
  m[3] = t.x;
  m[7] = t.y;
  m[11] = t.z;
  return r;
}

RigidTransform RigidTransform::look_at(const Vec3& eye, const Vec3& target, const Vec3& world_up) {
  const Vec3 fwd = (target - eye).normalized();  // camera +z
  Vec3 down = -world_up;
  down = down - fwd * fwd.dot(down);
  Vec3 y_cam;
  if (down.norm() < 1e-9) {
    // looking straight up/down: fall back to world +y as the image down axis
    Vec3 alt{0, 1, 0};
    alt = alt - fwd * fwd.dot(alt);
    y_cam = alt.normalized();
  } else {
    y_cam = down.normalized();
  }
  const Vec3 x_cam = y_cam.cross(fwd);  // right-handed: x = y cross z
  RigidTransform r;
  auto& m = r.m_;
  m[0] = x_cam.x; m[1] = y_cam.x; m[2] = fwd.x; m[3] = eye.x;
  m[4] = x_cam.y; m[5] = y_cam.y; m[6] = fwd.y; m[7] = eye.y;
  m[8] = x_cam.z; m[9] = y_cam.z; m[10] = fwd.z; m[11] = eye.z;
  return r;
}

Vec3 RigidTransform::rotate(const Vec3& v) const {
  return {m_[0] * v.x + m_[1] * v.y + m_[2] * v.z,
          m_[4] * v.x + m_[5] * v.y + m_[6] * v.z,
          m_[8] * v.x + m_[9] * v.y + m_[10] * v.z};
}

Vec3 RigidTransform::apply(const Vec3& v) const {
  const Vec3 r = rotate(v);
  return {r.x + m_[3], r.y + m_[7], r.z + m_[11]};
}

double RigidTransform::orthonormality_error() const { return rotation_drift(m_); }

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform out;
  auto& m = out.m_;
  const auto& A = a.m_;
  const auto& B = b.m_;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double acc = 0;
      for (int k = 0; k < 4; ++k)
        acc += A[static_cast<size_t>(i) * 4 + k] * B[static_cast<size_t>(k) * 4 + j];
      m[static_cast<size_t>(i) * 4 + j] = acc;
    }
  m[12] = 0; m[13] = 0; m[14] = 0; m[15] = 1;
  if (rotation_drift(m) > 1e-12) reorthonormalize(m);
  return out;
}

RigidTransform invert(const RigidTransform& t) {
  RigidTransform out;
  auto& m = out.m_;
  const auto& a = t.m_;
  // Rt
  m[0] = a[0]; m[1] = a[4]; m[2] = a[8];
  m[4] = a[1]; m[5] = a[5]; m[6] = a[9];
  m[8] = a[2]; m[9] = a[6]; m[10] = a[10];
  // -Rt t
  m[3] = -(m[0] * a[3] + m[1] * a[7] + m[2] * a[11]);
  m[7] = -(m[4] * a[3] + m[5] * a[7] + m[6] * a[11]);
  m[11] = -(m[8] * a[3] + m[9] * a[7] + m[10] * a[11]);
  return out;
}

RigidTransform object_pose_in_camera(const RigidTransform& t_cam_tracker,
                                     const RigidTransform& t_tracker_marker,
                                     const RigidTransform& t_marker_obj) {
  return compose(compose(t_cam_tracker, t_tracker_marker), t_marker_obj);
}

RigidTransform propagate_pose(const RigidTransform& t_cam_k, const RigidTransform& t_cam_k0,
                              const RigidTransform& pose_k0) {
  return compose(compose(t_cam_k, invert(t_cam_k0)), pose_k0);
}

// ---------------------------------------------------------------------------
// Camera model
// ---------------------------------------------------------------------------

void CameraIntrinsics::validate() const {
  if (width <= 0 || height <= 0)
    throw std::invalid_argument("CameraIntrinsics: non-positive raster size");
  if (fx <= 0 || fy <= 0) throw std::invalid_argument("CameraIntrinsics: focal lengths must be > 0");
  if (cx < 0 || cx >= width || cy < 0 || cy >= height)
    throw std::invalid_argument("CameraIntrinsics: principal point outside the image");
}

CameraIntrinsics CameraIntrinsics::scaled(int new_width, int new_height) const {
  const double sx = static_cast<double>(new_width) / width;
  const double sy = static_cast<double>(new_height) / height;
  return {fx * sx, fy * sy, cx * sx, cy * sy, new_width, new_height};
}

PointCloud deproject(const DepthMap& depth, const CameraIntrinsics& intr, const Mask* mask) {
  intr.validate();
  if (depth.height() != intr.height || depth.width() != intr.width)
    throw std::invalid_argument("deproject: depth " + std::to_string(depth.width()) + "x" +
                                std::to_string(depth.height()) + " does not match intrinsics " +
                                std::to_string(intr.width) + "x" + std::to_string(intr.height));
  if (mask && (mask->height != depth.height() || mask->width != depth.width()))
    throw std::invalid_argument("deproject: mask size does not match depth");
  PointCloud cloud;
  for (int v = 0; v < depth.height(); ++v)
    for (int u = 0; u < depth.width(); ++u) {
      const double d = depth.at(v, u);
      if (d <= 0) continue;
      if (mask && !mask->at(v, u)) continue;
      cloud.points.push_back({(u - intr.cx) * d / intr.fx, (v - intr.cy) * d / intr.fy, d});
    }
  return cloud;
}

void write_ply(const PointCloud& cloud, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_ply: cannot open " + path);
  const bool rgb = !cloud.colors.empty();
  if (rgb && cloud.colors.size() != cloud.points.size())
    throw std::invalid_argument("write_ply: color count does not match point count");
  f << "ply\nformat ascii 1.0\nelement vertex " << cloud.points.size() << "\n";
  f << "property float x\nproperty float y\nproperty float z\n";
  if (rgb) f << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  f << "end_header\n";
  char line[160];
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    const Vec3& p = cloud.points[i];
    if (rgb) {
      std::snprintf(line, sizeof(line), "%.9g %.9g %.9g %d %d %d\n", p.x, p.y, p.z,
                    cloud.colors[i][0], cloud.colors[i][1], cloud.colors[i][2]);
    } else {
      std::snprintf(line, sizeof(line), "%.9g %.9g %.9g\n", p.x, p.y, p.z);
    }
    f << line;
  }
  if (!f) throw std::runtime_error("write_ply: write failed for " + path);
}

// ---------------------------------------------------------------------------
// Normals from depth
// ---------------------------------------------------------------------------

NormalMap normals_from_depth(const DepthMap& depth) {
  const int H = depth.height(), W = depth.width();
  NormalMap out(H, W);
  auto ok = [&](int v, int u) { return depth.at(v, u) > 0.0f; };
  for (int v = 0; v < H; ++v) {
    for (int u = 0; u < W; ++u) {
      if (!ok(v, u)) continue;
      double dw, dh;
      bool valid = true;
      if (W == 1) {
        dw = 0;
      } else if (u == 0) {
        valid = valid && ok(v, 1);
        dw = valid ? depth.at(v, 1) - depth.at(v, 0) : 0;
      } else if (u == W - 1) {
        valid = valid && ok(v, W - 2);
        dw = valid ? depth.at(v, W - 1) - depth.at(v, W - 2) : 0;
      } else {
        valid = valid && ok(v, u - 1) && ok(v, u + 1);
        dw = valid ? 0.5 * (depth.at(v, u + 1) - depth.at(v, u - 1)) : 0;
      }
      if (valid) {
        if (H == 1) {
          dh = 0;
        } else if (v == 0) {
          valid = valid && ok(1, u);
          dh = valid ? depth.at(1, u) - depth.at(0, u) : 0;
        } else if (v == H - 1) {
          valid = valid && ok(H - 2, u);
          dh = valid ? depth.at(H - 1, u) - depth.at(H - 2, u) : 0;
        } else {
          valid = valid && ok(v - 1, u) && ok(v + 1, u);
          dh = valid ? 0.5 * (depth.at(v + 1, u) - depth.at(v - 1, u)) : 0;
        }
      } else {
        dh = 0;
      }
      if (!valid) continue;
      const double len = std::sqrt(dw * dw + dh * dh + 1.0);
      float* n = out.at(v, u);
      n[0] = static_cast<float>(dw / len);
      n[1] = static_cast<float>(dh / len);
      n[2] = static_cast<float>(-1.0 / len);
      out.valid[static_cast<size_t>(v) * W + u] = 1;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ray casting
// ---------------------------------------------------------------------------

namespace {

constexpr double kRayEps = 1e-9;

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  Vec3 n_obj;
  bool ok = false;
};

Hit intersect_sphere(const Vec3& o, const Vec3& d, double radius) {
  Hit h;
  const double a = d.dot(d);
  const double b = 2.0 * o.dot(d);
  const double c = o.dot(o) - radius * radius;
  const double disc = b * b - 4 * a * c;
  if (disc < 0) return h;
  const double sq = std::sqrt(disc);
  const double t0 = (-b - sq) / (2 * a);
  const double t1 = (-b + sq) / (2 * a);
  double t;
  if (t0 > kRayEps)
    t = t0;
  else if (t1 > kRayEps)
    t = t1;
  else
    return h;
  h.t = t;
  h.n_obj = (o + d * t) * (1.0 / radius);
  h.ok = true;
  return h;
}

Hit intersect_box(const Vec3& o, const Vec3& d, const Vec3& size) {
  Hit h;
  const double hx = size.x / 2, hy = size.y / 2, hz = size.z / 2;
  double tmin = -std::numeric_limits<double>::infinity();
  double tmax = std::numeric_limits<double>::infinity();
  const double os[3] = {o.x, o.y, o.z};
  const double ds[3] = {d.x, d.y, d.z};
  const double hs[3] = {hx, hy, hz};
  for (int i = 0; i < 3; ++i) {
    if (std::fabs(ds[i]) < 1e-300) {
      if (os[i] < -hs[i] || os[i] > hs[i]) return h;
    } else {
      double t0 = (-hs[i] - os[i]) / ds[i];
      double t1 = (hs[i] - os[i]) / ds[i];
      if (t0 > t1) std::swap(t0, t1);
      tmin = std::max(tmin, t0);
      tmax = std::min(tmax, t1);
      if (tmin > tmax) return h;
    }
  }
  double t;
  if (tmin > kRayEps)
    t = tmin;
  else if (tmax > kRayEps)
    t = tmax;
  else
    return h;
  // face normal from the dominant coordinate ratio
  const Vec3 p = o + d * t;
  const double rs[3] = {std::fabs(p.x) / hx, std::fabs(p.y) / hy, std::fabs(p.z) / hz};
  int axis = 0;
  if (rs[1] > rs[axis]) axis = 1;
  if (rs[2] > rs[axis]) axis = 2;
  Vec3 n{0, 0, 0};
  const double ps[3] = {p.x, p.y, p.z};
  (axis == 0 ? n.x : axis == 1 ? n.y : n.z) = ps[axis] >= 0 ? 1.0 : -1.0;
  h.t = t;
  h.n_obj = n;
  h.ok = true;
  return h;
}

Hit intersect_cylinder(const Vec3& o, const Vec3& d, double radius, double height) {
  Hit best;
  const double hz = height / 2;
  // lateral surface
  const double a = d.x * d.x + d.y * d.y;
  if (a > 1e-300) {
    const double b = 2.0 * (o.x * d.x + o.y * d.y);
    const double c = o.x * o.x + o.y * o.y - radius * radius;
    const double disc = b * b - 4 * a * c;
    if (disc >= 0) {
      const double sq = std::sqrt(disc);
      for (double t : {(-b - sq) / (2 * a), (-b + sq) / (2 * a)}) {
        if (t <= kRayEps || t >= best.t) continue;
        const Vec3 p = o + d * t;
        if (std::fabs(p.z) <= hz) {
          best.t = t;
          best.n_obj = Vec3{p.x, p.y, 0} * (1.0 / radius);
          best.ok = true;
        }
      }
    }
  }
  // caps
  if (std::fabs(d.z) > 1e-300) {
    for (double zcap : {hz, -hz}) {
      const double t = (zcap - o.z) / d.z;
      if (t <= kRayEps || t >= best.t) continue;
      const Vec3 p = o + d * t;
      if (p.x * p.x + p.y * p.y <= radius * radius) {
        best.t = t;
        best.n_obj = {0, 0, zcap > 0 ? 1.0 : -1.0};
        best.ok = true;
      }
    }
  }
  return best;
}

}  // namespace

RenderResult render_depth(const std::vector<Primitive>& scene,
                          const RigidTransform& camera_from_world, const CameraIntrinsics& intr) {
  intr.validate();
  const int H = intr.height, W = intr.width;
  RenderResult out;
  out.depth = DepthMap(H, W);
  out.behind = DepthMap(H, W);
  out.ids.assign(static_cast<size_t>(H) * W, -1);
  out.behind_ids.assign(static_cast<size_t>(H) * W, -1);
  out.normals = NormalMap(H, W);

  struct Cached {
    RigidTransform obj_from_cam;
    RigidTransform cam_from_obj;
    const Primitive* prim;
  };
  std::vector<Cached> cached;
  cached.reserve(scene.size());
  for (const auto& prim : scene) {
    const RigidTransform cam_from_obj = compose(camera_from_world, prim.pose);
    cached.push_back({invert(cam_from_obj), cam_from_obj, &prim});
  }

#pragma omp parallel for schedule(static)
  for (int v = 0; v < H; ++v) {
    std::vector<Hit> hits(cached.size());
    for (int u = 0; u < W; ++u) {
      const Vec3 dir{(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0};
      int best = -1;
      for (size_t i = 0; i < cached.size(); ++i) {
        const Vec3 o = cached[i].obj_from_cam.translation_part();
        const Vec3 d = cached[i].obj_from_cam.rotate(dir);
        const Primitive& p = *cached[i].prim;
        switch (p.kind) {
          case PrimitiveKind::Sphere: hits[i] = intersect_sphere(o, d, p.size.x); break;
          case PrimitiveKind::Box: hits[i] = intersect_box(o, d, p.size); break;
          case PrimitiveKind::Cylinder:
            hits[i] = intersect_cylinder(o, d, p.size.x, p.size.y);
            break;
        }
        if (hits[i].ok && (best < 0 || hits[i].t < hits[static_cast<size_t>(best)].t))
          best = static_cast<int>(i);
      }
      if (best < 0) continue;
      const size_t px = static_cast<size_t>(v) * W + u;
      out.depth.at(v, u) = static_cast<float>(hits[static_cast<size_t>(best)].t);
      out.ids[px] = cached[static_cast<size_t>(best)].prim->object_id;
      double behind_t = std::numeric_limits<double>::infinity();
      int behind_prim = -1;
      for (size_t i = 0; i < cached.size(); ++i)
        if (hits[i].ok && static_cast<int>(i) != best && hits[i].t < behind_t) {
          behind_t = hits[i].t;
          behind_prim = static_cast<int>(i);
        }
      if (behind_prim >= 0) {
        out.behind.at(v, u) = static_cast<float>(behind_t);
        out.behind_ids[px] = cached[static_cast<size_t>(behind_prim)].prim->object_id;
      }

      Vec3 n_cam = cached[static_cast<size_t>(best)].cam_from_obj.rotate(
          hits[static_cast<size_t>(best)].n_obj);
      if (n_cam.dot(dir) > 0) n_cam = -n_cam;
      float* n = out.normals.at(v, u);
      const double len = n_cam.norm();
      n[0] = static_cast<float>(n_cam.x / len);
      n[1] = static_cast<float>(n_cam.y / len);
      n[2] = static_cast<float>(n_cam.z / len);
      out.normals.valid[px] = 1;
    }
  }
  return out;
}

}  // namespace depthfill
