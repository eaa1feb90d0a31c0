#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace depthfill {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const;
  Vec3 normalized() const;
};

// SE(3) pose as a 4x4 homogeneous matrix, row-major. Rotation block is kept
// orthonormal (det +1); the last row is exactly (0,0,0,1).
class RigidTransform {
 public:
  RigidTransform();  // identity

  static RigidTransform from_matrix(const std::array<double, 16>& m);
  static RigidTransform translation(const Vec3& t);
  static RigidTransform axis_angle(const Vec3& axis, double angle_rad, const Vec3& t = {});
  // Camera-to-world pose: camera +z toward target, +y roughly opposite world_up.
  static RigidTransform look_at(const Vec3& eye, const Vec3& target, const Vec3& world_up);

  const std::array<double, 16>& matrix() const { return m_; }
  double at(int r, int c) const { return m_[static_cast<size_t>(r) * 4 + c]; }

  Vec3 rotate(const Vec3& v) const;     // R * v
  Vec3 apply(const Vec3& v) const;      // R * v + t
  Vec3 translation_part() const { return {m_[3], m_[7], m_[11]}; }

  // max |RtR - I| plus last-row/det drift; used by validation and tests
  double orthonormality_error() const;

 private:
  std::array<double, 16> m_;
  friend RigidTransform compose(const RigidTransform&, const RigidTransform&);
  friend RigidTransform invert(const RigidTransform&);
};

// Matrix product a*b, re-orthonormalized when accumulated drift exceeds 1e-12.
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
// Closed-form inverse (Rt, -Rt t).
RigidTransform invert(const RigidTransform& t);

// Triple product of the pose chain camera<-tracker<-marker<-object.
RigidTransform object_pose_in_camera(const RigidTransform& t_cam_tracker,
                                     const RigidTransform& t_tracker_marker,
                                     const RigidTransform& t_marker_obj);

// Pose recovery across viewpoints: t_cam_k * inverse(t_cam_k0) * pose_k0.
RigidTransform propagate_pose(const RigidTransform& t_cam_k, const RigidTransform& t_cam_k0,
                              const RigidTransform& pose_k0);

struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const;
  // Intrinsics for the same field of view at a different raster size.
  CameraIntrinsics scaled(int new_width, int new_height) const;
};

// Depth raster in meters, +z into the scene, 0 = missing.
class DepthMap {
 public:
  DepthMap() = default;
  DepthMap(int height, int width, float fill = 0.0f)
      : height_(height), width_(width), d_(static_cast<size_t>(height) * width, fill) {}

  int height() const { return height_; }
  int width() const { return width_; }
  float at(int v, int u) const { return d_[static_cast<size_t>(v) * width_ + u]; }
  float& at(int v, int u) { return d_[static_cast<size_t>(v) * width_ + u]; }
  const std::vector<float>& data() const { return d_; }
  std::vector<float>& data() { return d_; }
  bool same_size(const DepthMap& o) const {
    return height_ == o.height_ && width_ == o.width_;
  }

 private:
  int height_ = 0, width_ = 0;
  std::vector<float> d_;
};

struct Mask {
  int height = 0, width = 0;
  std::vector<uint8_t> m;  // 0 or 1

  Mask() = default;
  Mask(int h, int w, uint8_t fill = 0) : height(h), width(w), m(static_cast<size_t>(h) * w, fill) {}
  uint8_t at(int v, int u) const { return m[static_cast<size_t>(v) * width + u]; }
  uint8_t& at(int v, int u) { return m[static_cast<size_t>(v) * width + u]; }
  int64_t count() const;
};

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<std::array<uint8_t, 3>> colors;  // empty or one entry per point
};

// Pixel (u,v) with depth d>0 maps to ((u-cx)d/fx, (v-cy)d/fy, d). Zero-depth
// pixels are skipped; a mask restricts the output when given.
PointCloud deproject(const DepthMap& depth, const CameraIntrinsics& intr,
                     const Mask* mask = nullptr);

// ASCII PLY with float x,y,z and optional uchar rgb.
void write_ply(const PointCloud& cloud, const std::string& path);

struct NormalMap {
  int height = 0, width = 0;
  std::vector<float> n;        // h*w*3, row-major, (nx,ny,nz) per pixel
  std::vector<uint8_t> valid;  // h*w

  NormalMap() = default;
  NormalMap(int h, int w)
      : height(h), width(w), n(static_cast<size_t>(h) * w * 3, 0.0f),
        valid(static_cast<size_t>(h) * w, 0) {}
  const float* at(int v, int u) const { return &n[(static_cast<size_t>(v) * width + u) * 3]; }
  float* at(int v, int u) { return &n[(static_cast<size_t>(v) * width + u) * 3]; }
};

// Unit normals from the depth raster: with width/height gradient rows
// D_w = (1, 0, dd/dw) and D_h = (0, 1, dd/dh) (central differences inside,
// one-sided at borders), normal = normalize(D_h x D_w), which is
// (dd/dw, dd/dh, -1) normalized. Pixels whose stencil touches missing depth
// are flagged invalid, not thrown.
NormalMap normals_from_depth(const DepthMap& depth);

// ---- analytic primitives & rendering ----

enum class PrimitiveKind { Sphere, Box, Cylinder };

// Analytic solid placed in the world. Sphere: radius = size.x. Box: size is
// the full extent along the object axes. Cylinder: radius = size.x, height =
// size.y along the object z axis.
struct Primitive {
  int object_id = 0;
  PrimitiveKind kind = PrimitiveKind::Sphere;
  Vec3 size;
  RigidTransform pose;  // object-to-world
};

struct RenderResult {
  DepthMap depth;               // first hit z-depth, 0 = background
  std::vector<int32_t> ids;     // per pixel object id, -1 = background
  DepthMap behind;              // nearest hit excluding the winning object, 0 = none
  std::vector<int32_t> behind_ids;  // object id of that hit, -1 = none
  NormalMap normals;            // analytic camera-facing surface normals
};

// Per-pixel ray casting through pixel centers; nearest positive intersection
// wins; depth is the camera-frame z coordinate. Deterministic for fixed
// inputs.
RenderResult render_depth(const std::vector<Primitive>& scene,
                          const RigidTransform& camera_from_world,
                          const CameraIntrinsics& intr);

}  // namespace depthfill
