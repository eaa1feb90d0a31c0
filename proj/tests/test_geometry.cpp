#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "depthfill/geometry.hpp"
#include "depthfill/rng.hpp"

using namespace depthfill;

namespace {

RigidTransform random_transform(Rng& rng) {
  const Vec3 axis{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  const double angle = rng.uniform(-M_PI, M_PI);
  const Vec3 t{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
  return RigidTransform::axis_angle(axis, angle, t);
}

// Plain 4x4 row-major matrix product, independent of RigidTransform.
std::array<double, 16> matmul4(const std::array<double, 16>& a, const std::array<double, 16>& b) {
  std::array<double, 16> out{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double acc = 0;
      for (int k = 0; k < 4; ++k) acc += a[i * 4 + k] * b[k * 4 + j];
      out[i * 4 + j] = acc;
    }
  return out;
}

double max_abs_diff(const std::array<double, 16>& a, const std::array<double, 16>& b) {
  double worst = 0;
  for (int i = 0; i < 16; ++i) worst = std::max(worst, std::fabs(a[i] - b[i]));
  return worst;
}

bool is_identity(const RigidTransform& t, double tol) {
  const RigidTransform id;
  return max_abs_diff(t.matrix(), id.matrix()) <= tol;
}

// Minimal ASCII PLY reader used as the reference parser for export tests.
struct PlyData {
  std::vector<Vec3> points;
  std::vector<std::array<int, 3>> colors;
};

PlyData read_ply(const std::string& path) {
  std::ifstream f(path);
  REQUIRE(f.good());
  std::string line;
  size_t count = 0;
  bool has_rgb = false;
  std::getline(f, line);
  REQUIRE(line == "ply");
  while (std::getline(f, line) && line != "end_header") {
    std::istringstream is(line);
    std::string tok;
    is >> tok;
    if (tok == "element") {
      std::string what;
      is >> what >> count;
      REQUIRE(what == "vertex");
    } else if (tok == "property") {
      std::string type, name;
      is >> type >> name;
      if (name == "red") has_rgb = true;
    }
  }
  PlyData data;
  for (size_t i = 0; i < count; ++i) {
    std::getline(f, line);
    std::istringstream is(line);
    Vec3 p;
    is >> p.x >> p.y >> p.z;
    data.points.push_back(p);
    if (has_rgb) {
      std::array<int, 3> c{};
      is >> c[0] >> c[1] >> c[2];
      data.colors.push_back(c);
    }
    REQUIRE(!is.fail());
  }
  return data;
}

}  // namespace

TEST_CASE("compose basics and matrix oracle") {
  Rng rng(1);
  const RigidTransform id;
  for (int trial = 0; trial < 8; ++trial) {
    auto t = random_transform(rng);
    CHECK(max_abs_diff(compose(id, t).matrix(), t.matrix()) < 1e-15);
    CHECK(is_identity(compose(t, invert(t)), 1e-9));

    auto a = random_transform(rng);
    auto b = random_transform(rng);
    CHECK(max_abs_diff(compose(a, b).matrix(), matmul4(a.matrix(), b.matrix())) < 1e-12);
  }
}

TEST_CASE("invert basics") {
  CHECK(is_identity(invert(RigidTransform()), 0.0));
  auto t = invert(RigidTransform::translation({0.1, 0, 0}));
  CHECK(t.at(0, 3) == doctest::Approx(-0.1).epsilon(1e-15));
  CHECK(t.at(1, 3) == 0.0);
  CHECK(t.at(2, 3) == 0.0);

  Rng rng(2);
  for (int trial = 0; trial < 8; ++trial) {
    auto r = random_transform(rng);
    CHECK(is_identity(compose(invert(r), r), 1e-12));
  }
}

TEST_CASE("object_pose_in_camera is the left-to-right triple product") {
  const RigidTransform id;
  CHECK(is_identity(object_pose_in_camera(id, id, id), 0.0));

  Rng rng(3);
  auto a = random_transform(rng);
  auto c = random_transform(rng);
  CHECK(max_abs_diff(object_pose_in_camera(a, id, c).matrix(), compose(a, c).matrix()) < 1e-13);

  for (int trial = 0; trial < 8; ++trial) {
    auto x = random_transform(rng);
    auto y = random_transform(rng);
    auto z = random_transform(rng);
    auto got = object_pose_in_camera(x, y, z);
    CHECK(max_abs_diff(got.matrix(), compose(compose(x, y), z).matrix()) < 1e-12);
    // associative-consistent with the other parenthesization
    CHECK(max_abs_diff(got.matrix(), compose(x, compose(y, z)).matrix()) < 1e-12);
    // matrix oracle
    CHECK(max_abs_diff(got.matrix(), matmul4(matmul4(x.matrix(), y.matrix()), z.matrix())) <
          1e-12);
  }
}

TEST_CASE("propagate_pose identities and oracle") {
  Rng rng(4);
  for (int trial = 0; trial < 8; ++trial) {
    auto t_k0 = random_transform(rng);
    auto pose = random_transform(rng);
    CHECK(max_abs_diff(propagate_pose(t_k0, t_k0, pose).matrix(), pose.matrix()) < 1e-12);

    auto delta = random_transform(rng);
    auto t_k = compose(delta, t_k0);
    CHECK(max_abs_diff(propagate_pose(t_k, t_k0, pose).matrix(),
                       compose(delta, pose).matrix()) < 1e-12);

    auto t_any = random_transform(rng);
    auto inv = invert(t_k0);
    CHECK(max_abs_diff(
              propagate_pose(t_any, t_k0, pose).matrix(),
              matmul4(matmul4(t_any.matrix(), inv.matrix()), pose.matrix())) < 1e-12);
  }
}

TEST_CASE("deproject pinhole substitution cases") {
  CameraIntrinsics intr{100, 100, 0, 0, 128, 8};
  DepthMap depth(8, 128);
  depth.at(0, 100) = 2.0f;
  auto cloud = deproject(depth, intr);
  REQUIRE(cloud.points.size() == 1);
  CHECK(cloud.points[0].x == doctest::Approx(2.0));
  CHECK(cloud.points[0].y == doctest::Approx(0.0));
  CHECK(cloud.points[0].z == doctest::Approx(2.0));

  CameraIntrinsics intr2{80, 80, 32, 24, 64, 48};
  DepthMap depth2(48, 64);
  depth2.at(24, 32) = 1.0f;  // principal point
  auto cloud2 = deproject(depth2, intr2);
  REQUIRE(cloud2.points.size() == 1);
  CHECK(cloud2.points[0].x == doctest::Approx(0.0));
  CHECK(cloud2.points[0].y == doctest::Approx(0.0));
  CHECK(cloud2.points[0].z == doctest::Approx(1.0));

  DepthMap wrong(10, 10);
  CHECK_THROWS_AS(deproject(wrong, intr2), std::invalid_argument);
}

TEST_CASE("deproject/project round trip recovers pixel centers") {
  CameraIntrinsics intr{61.5, 60.25, 31.5, 23.5, 64, 48};
  Rng rng(5);
  DepthMap depth(48, 64);
  for (int v = 0; v < 48; ++v)
    for (int u = 0; u < 64; ++u) depth.at(v, u) = static_cast<float>(rng.uniform(0.4, 1.4));
  auto cloud = deproject(depth, intr);
  REQUIRE(cloud.points.size() == static_cast<size_t>(48 * 64));
  size_t i = 0;
  for (int v = 0; v < 48; ++v)
    for (int u = 0; u < 64; ++u) {
      const Vec3& p = cloud.points[i++];
      const double pu = p.x / p.z * intr.fx + intr.cx;
      const double pv = p.y / p.z * intr.fy + intr.cy;
      CHECK(std::fabs(pu - u) < 1e-6);
      CHECK(std::fabs(pv - v) < 1e-6);
      CHECK(std::fabs(p.z - depth.at(v, u)) < 1e-6);
    }
}

TEST_CASE("normals_from_depth on a constant plane") {
  DepthMap depth(6, 7, 0.9f);
  auto nm = normals_from_depth(depth);
  for (int v = 0; v < 6; ++v)
    for (int u = 0; u < 7; ++u) {
      REQUIRE(nm.valid[v * 7 + u] == 1);
      CHECK(nm.at(v, u)[0] == doctest::Approx(0.0));
      CHECK(nm.at(v, u)[1] == doctest::Approx(0.0));
      CHECK(nm.at(v, u)[2] == doctest::Approx(-1.0));
    }
}

TEST_CASE("normals_from_depth on a width ramp follows the cross-product formula") {
  // d = d0 + a*w  =>  D_h x D_w = (a, 0, -1), normalized
  const double a = 0.05;
  DepthMap depth(5, 9);
  for (int v = 0; v < 5; ++v)
    for (int u = 0; u < 9; ++u) depth.at(v, u) = static_cast<float>(1.0 + a * u);
  auto nm = normals_from_depth(depth);
  const double len = std::sqrt(a * a + 1.0);
  for (int v = 0; v < 5; ++v)
    for (int u = 0; u < 9; ++u) {
      CHECK(nm.at(v, u)[0] == doctest::Approx(a / len).epsilon(1e-4));
      CHECK(nm.at(v, u)[1] == doctest::Approx(0.0).epsilon(1e-4));
      CHECK(nm.at(v, u)[2] == doctest::Approx(-1.0 / len).epsilon(1e-4));
    }
}

TEST_CASE("normals are unit length and orthogonal to the gradient rows") {
  Rng rng(6);
  DepthMap depth(16, 20);
  for (int v = 0; v < 16; ++v)
    for (int u = 0; u < 20; ++u)
      depth.at(v, u) = static_cast<float>(1.0 + 0.05 * std::sin(0.4 * u) * std::cos(0.3 * v) +
                                          0.01 * rng.uniform());
  auto nm = normals_from_depth(depth);
  for (int v = 0; v < 16; ++v)
    for (int u = 0; u < 20; ++u) {
      REQUIRE(nm.valid[v * 20 + u] == 1);
      const float* n = nm.at(v, u);
      const double len = std::sqrt(double(n[0]) * n[0] + double(n[1]) * n[1] + double(n[2]) * n[2]);
      CHECK(std::fabs(len - 1.0) < 1e-6);
      // recompute the stencil rows used by the implementation
      double dw = (u == 0)        ? depth.at(v, 1) - depth.at(v, 0)
                  : (u == 19)     ? depth.at(v, 19) - depth.at(v, 18)
                                  : 0.5 * (depth.at(v, u + 1) - depth.at(v, u - 1));
      double dh = (v == 0)        ? depth.at(1, u) - depth.at(0, u)
                  : (v == 15)     ? depth.at(15, u) - depth.at(14, u)
                                  : 0.5 * (depth.at(v + 1, u) - depth.at(v - 1, u));
      const double dot_w = n[0] * 1.0 + n[2] * dw;  // n . D_w
      const double dot_h = n[1] * 1.0 + n[2] * dh;  // n . D_h
      CHECK(std::fabs(dot_w) < 1e-6);
      CHECK(std::fabs(dot_h) < 1e-6);
    }
}

TEST_CASE("normals_from_depth flags pixels adjacent to missing depth") {
  DepthMap depth(5, 5, 1.0f);
  depth.at(2, 2) = 0.0f;
  auto nm = normals_from_depth(depth);
  CHECK(nm.valid[2 * 5 + 2] == 0);
  CHECK(nm.valid[2 * 5 + 1] == 0);
  CHECK(nm.valid[2 * 5 + 3] == 0);
  CHECK(nm.valid[1 * 5 + 2] == 0);
  CHECK(nm.valid[3 * 5 + 2] == 0);
  CHECK(nm.valid[1 * 5 + 1] == 1);  // diagonal neighbor unaffected
}

TEST_CASE("render_depth empty scene") {
  CameraIntrinsics intr{60, 60, 16, 12, 32, 24};
  auto res = render_depth({}, RigidTransform(), intr);
  for (float d : res.depth.data()) CHECK(d == 0.0f);
  for (int32_t id : res.ids) CHECK(id == -1);
}

TEST_CASE("render_depth sphere on the optical axis") {
  CameraIntrinsics intr{60, 60, 16, 12, 32, 24};
  Primitive sphere{7, PrimitiveKind::Sphere, {0.25, 0, 0}, RigidTransform::translation({0, 0, 1})};
  auto res = render_depth({sphere}, RigidTransform(), intr);
  CHECK(res.depth.at(12, 16) == doctest::Approx(0.75).epsilon(1e-9));
  CHECK(res.ids[12 * 32 + 16] == 7);
  // camera-facing point: analytic normal is (0,0,-1)
  CHECK(res.normals.at(12, 16)[2] == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("render_depth matches a ray-march oracle on a sphere") {
  CameraIntrinsics intr{40, 40, 11.5, 11.5, 24, 24};
  const Vec3 center{0.02, -0.03, 0.8};
  const double radius = 0.2;
  Primitive sphere{1, PrimitiveKind::Sphere, {radius, 0, 0}, RigidTransform::translation(center)};
  auto res = render_depth({sphere}, RigidTransform(), intr);

  int hit = 0, good = 0;
  for (int v = 0; v < 24; ++v)
    for (int u = 0; u < 24; ++u) {
      if (res.depth.at(v, u) <= 0) continue;
      ++hit;
      const Vec3 dir{(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0};
      // march t (the z-depth parameter) until the sphere SDF changes sign
      const double step = 1e-5;
      double found = -1;
      double prev = (dir * 0.3 - center).norm() - radius;
      for (double t = 0.3 + step; t < 1.2; t += step) {
        const double sdf = (dir * t - center).norm() - radius;
        if (prev > 0 && sdf <= 0) {
          found = t - step / 2;
          break;
        }
        prev = sdf;
      }
      REQUIRE(found > 0);
      if (std::fabs(found - res.depth.at(v, u)) < 1e-4) ++good;
    }
  REQUIRE(hit > 40);
  CHECK(static_cast<double>(good) >= 0.99 * hit);
}

TEST_CASE("deprojected rendered sphere points lie on the sphere") {
  CameraIntrinsics intr{60, 60, 16, 12, 32, 24};
  const Vec3 center{0, 0.05, 0.9};
  Primitive sphere{1, PrimitiveKind::Sphere, {0.22, 0, 0}, RigidTransform::translation(center)};
  auto res = render_depth({sphere}, RigidTransform(), intr);
  auto cloud = deproject(res.depth, intr);
  REQUIRE(cloud.points.size() > 50);
  for (const auto& p : cloud.points) CHECK(std::fabs((p - center).norm() - 0.22) < 1e-4);
}

TEST_CASE("render_depth box and cylinder sanity") {
  CameraIntrinsics intr{60, 60, 16, 12, 32, 24};
  // box face at z = 0.7, seen flat-on
  Primitive box{2, PrimitiveKind::Box, {0.4, 0.4, 0.2}, RigidTransform::translation({0, 0, 0.8})};
  auto res = render_depth({box}, RigidTransform(), intr);
  CHECK(res.depth.at(12, 16) == doctest::Approx(0.7).epsilon(1e-6));
  CHECK(res.normals.at(12, 16)[2] == doctest::Approx(-1.0).epsilon(1e-9));

  // cylinder standing along camera y: rotate object z axis onto camera y
  Primitive cyl{3, PrimitiveKind::Cylinder, {0.1, 0.3, 0},
                RigidTransform::axis_angle({1, 0, 0}, M_PI / 2, {0, 0, 0.6})};
  auto res2 = render_depth({cyl}, RigidTransform(), intr);
  CHECK(res2.depth.at(12, 16) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(res2.ids[12 * 32 + 16] == 3);
}

TEST_CASE("render_depth reports the hit behind the winner") {
  CameraIntrinsics intr{60, 60, 16, 12, 32, 24};
  Primitive front{1, PrimitiveKind::Sphere, {0.1, 0, 0}, RigidTransform::translation({0, 0, 0.6})};
  Primitive back{2, PrimitiveKind::Box, {1.0, 1.0, 0.1}, RigidTransform::translation({0, 0, 1.0})};
  auto res = render_depth({front, back}, RigidTransform(), intr);
  CHECK(res.ids[12 * 32 + 16] == 1);
  CHECK(res.depth.at(12, 16) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(res.behind.at(12, 16) == doctest::Approx(0.95).epsilon(1e-6));
  // a pixel that only sees the box has no behind hit
  CHECK(res.ids[2 * 32 + 2] == 2);
  CHECK(res.behind.at(2, 2) == 0.0f);
}

TEST_CASE("rendering is deterministic") {
  CameraIntrinsics intr{60, 60, 16, 12, 32, 24};
  Rng rng(8);
  std::vector<Primitive> scene;
  for (int i = 0; i < 5; ++i)
    scene.push_back({i, PrimitiveKind::Sphere, {rng.uniform(0.05, 0.2), 0, 0},
                     random_transform(rng)});
  auto cam = RigidTransform::look_at({0.5, 0.4, 0.8}, {0, 0, 0}, {0, 0, 1});
  auto a = render_depth(scene, invert(cam), intr);
  auto b = render_depth(scene, invert(cam), intr);
  CHECK(a.depth.data() == b.depth.data());
  CHECK(a.ids == b.ids);
  CHECK(a.normals.n == b.normals.n);
}

TEST_CASE("ply export loads back through the reference parser") {
  PointCloud cloud;
  cloud.points = {{0.1, -0.2, 0.9}, {0.0, 0.0, 1.5}, {-0.3, 0.25, 0.45}};
  cloud.colors = {{{255, 0, 0}}, {{0, 255, 0}}, {{12, 34, 56}}};
  const std::string path = "test_cloud.ply";
  write_ply(cloud, path);
  auto data = read_ply(path);
  REQUIRE(data.points.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(std::fabs(data.points[i].x - cloud.points[i].x) < 1e-6);
    CHECK(std::fabs(data.points[i].y - cloud.points[i].y) < 1e-6);
    CHECK(std::fabs(data.points[i].z - cloud.points[i].z) < 1e-6);
    CHECK(data.colors[i][0] == cloud.colors[i][0]);
    CHECK(data.colors[i][1] == cloud.colors[i][1]);
    CHECK(data.colors[i][2] == cloud.colors[i][2]);
  }
  std::remove(path.c_str());
}

TEST_CASE("from_matrix validates pose invariants") {
  std::array<double, 16> bad = {1, 0, 0, 0, 0, 2, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
  CHECK_THROWS_AS(RigidTransform::from_matrix(bad), std::invalid_argument);
  std::array<double, 16> bad_row = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 1e-6, 1};
  CHECK_THROWS_AS(RigidTransform::from_matrix(bad_row), std::invalid_argument);
  // mirrored (det -1) rotations are rejected
  std::array<double, 16> mirror = {-1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
  CHECK_THROWS_AS(RigidTransform::from_matrix(mirror), std::invalid_argument);

  Rng rng(9);
  auto t = random_transform(rng);
  auto again = RigidTransform::from_matrix(t.matrix());
  CHECK(max_abs_diff(again.matrix(), t.matrix()) == 0.0);
  CHECK(t.orthonormality_error() < 1e-12);
}
