#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <random>

#include "geosweep/geometry.hpp"
#include "oracles.hpp"

using namespace geosweep;

namespace {

CameraModel axis_camera() {
  CameraModel cam;
  cam.fx = 100.0;
  cam.fy = 100.0;
  cam.cx = 50.0;
  cam.cy = 40.0;
  cam.width = 100;
  cam.height = 80;
  return cam;
}

}  // namespace

TEST_CASE("back_project matches the pinhole model") {
  const CameraModel cam = axis_camera();

  SECTION("principal point lands on the optical axis") {
    const Point3D p = back_project({50.0, 40.0}, 2.0, cam);
    CHECK(p.x == 0.0);
    CHECK(p.y == 0.0);
    CHECK(p.z == 2.0);
  }

  SECTION("unit offset scales by depth over focal") {
    const Point3D p = back_project({51.0, 40.0}, 2.0, cam);
    CHECK(p.x == Catch::Approx(2.0 / 100.0).margin(1e-15));
    CHECK(p.y == 0.0);
    CHECK(p.z == 2.0);
  }

  SECTION("z equals the depth argument exactly") {
    std::mt19937_64 rng(7001);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
      const CameraModel c = oracles::random_camera(rng);
      const PixelCoord p{uni(rng) * c.width, uni(rng) * c.height};
      const double d = 0.1 + 10.0 * uni(rng);
      CHECK(back_project(p, d, c).z == d);
    }
  }

  SECTION("non-positive depth throws") {
    CHECK_THROWS_AS(back_project({10.0, 10.0}, 0.0, cam), ConfigError);
    CHECK_THROWS_AS(back_project({10.0, 10.0}, -1.0, cam), ConfigError);
  }
}

TEST_CASE("project_point flags frustum membership") {
  const CameraModel cam = axis_camera();

  SECTION("point behind the camera is invalid") {
    const Projection pr = project_point(Eigen::Vector3d(0.0, 0.0, -1.0), cam);
    CHECK_FALSE(pr.in_frustum);
    CHECK(pr.depth == -1.0);
  }

  SECTION("point on the camera plane is invalid") {
    CHECK_FALSE(project_point(Eigen::Vector3d(0.1, 0.1, 0.0), cam).in_frustum);
  }

  SECTION("pixel outside the image is invalid but still reported") {
    const Projection pr = project_point(Eigen::Vector3d(10.0, 0.0, 1.0), cam);
    CHECK_FALSE(pr.in_frustum);
    CHECK(pr.pixel.u == Catch::Approx(1050.0));
  }

  SECTION("image corners are inside") {
    // u in [0, W-1] inclusive counts as inside.
    auto at_pixel = [&](double u, double v) {
      return Eigen::Vector3d((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
    };
    CHECK(project_point(at_pixel(0.0, 0.0), cam).in_frustum);
    CHECK(project_point(at_pixel(99.0, 79.0), cam).in_frustum);
    CHECK_FALSE(project_point(at_pixel(99.2, 40.0), cam).in_frustum);
    CHECK_FALSE(project_point(at_pixel(50.0, -0.2), cam).in_frustum);
  }
}

TEST_CASE("project_to_source round trip with identical cameras is identity") {
  std::mt19937_64 rng(7002);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int i = 0; i < 300; ++i) {
    const CameraModel cam = oracles::random_camera(rng);
    const PixelCoord p{uni(rng) * (cam.width - 1), uni(rng) * (cam.height - 1)};
    const double d = 0.2 + 8.0 * uni(rng);
    const Projection pr = project_to_source(p, d, cam, cam);
    REQUIRE(pr.in_frustum);
    CHECK(pr.pixel.u == Catch::Approx(p.u).margin(1e-10));
    CHECK(pr.pixel.v == Catch::Approx(p.v).margin(1e-10));
    CHECK(pr.depth == Catch::Approx(d).margin(1e-10));
  }
}

TEST_CASE("project_to_source agrees with the homogeneous-matrix oracle") {
  std::mt19937_64 rng(7003);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  int checked = 0;
  for (int i = 0; i < 2000 && checked < 500; ++i) {
    const CameraModel ref = oracles::random_camera(rng);
    const CameraModel src = oracles::random_camera(rng);
    const PixelCoord p{uni(rng) * ref.width, uni(rng) * ref.height};
    const double d = 0.5 + 6.0 * uni(rng);

    double oracle_depth = 0.0;
    const PixelCoord q = oracles::project_via_matrices(p, d, ref, src, &oracle_depth);
    if (oracle_depth < 0.05) continue;  // skip near-degenerate geometry
    const Projection pr = project_to_source(p, d, ref, src);
    CHECK(pr.depth == Catch::Approx(oracle_depth).margin(1e-9));
    CHECK(pr.pixel.u == Catch::Approx(q.u).margin(1e-8));
    CHECK(pr.pixel.v == Catch::Approx(q.v).margin(1e-8));
    ++checked;
  }
  REQUIRE(checked >= 500);
}

TEST_CASE("pure translation along x shifts pixels by the rectified disparity") {
  CameraModel ref = axis_camera();
  CameraModel src = ref;
  src.translation = Eigen::Vector3d(-0.3, 0.0, 0.0);  // center at +0.3 on x
  const double d = 2.5;
  const Projection pr = project_to_source({50.0, 40.0}, d, ref, src);
  REQUIRE(pr.in_frustum);
  // disparity = f * b / d with b = 0.3
  CHECK(pr.pixel.u == Catch::Approx(50.0 - 100.0 * 0.3 / d).margin(1e-12));
  CHECK(pr.pixel.v == Catch::Approx(40.0).margin(1e-12));
  CHECK(pr.depth == Catch::Approx(d).margin(1e-12));
}

TEST_CASE("depth_ratio equals the ray-plane intersection oracle") {
  std::mt19937_64 rng(7004);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  int checked = 0;
  while (checked < 1000) {
    const CameraModel cam = oracles::random_camera(rng);
    const PixelCoord p_i{uni(rng) * (cam.width - 1), uni(rng) * (cam.height - 1)};
    const PixelCoord p_j{p_i.u + 3.0 * (uni(rng) - 0.5), p_i.v + 3.0 * (uni(rng) - 0.5)};
    Eigen::Vector3d n = oracles::random_unit_vector(rng);
    if (n.z() > 0.0) n = -n;  // camera-facing
    const double d = 0.5 + 5.0 * uni(rng);

    const auto oracle = oracles::ray_plane_ratio(p_i, p_j, n, cam, d);
    const auto got = try_depth_ratio(p_i, p_j, n, cam);
    REQUIRE(oracle.has_value() == got.has_value());
    if (!got) continue;
    CHECK(*got == Catch::Approx(*oracle).margin(1e-9));
    ++checked;
  }
}

TEST_CASE("depth_ratio pinned configuration") {
  CameraModel cam;
  cam.fx = cam.fy = 100.0;
  cam.cx = cam.cy = 50.0;
  cam.width = cam.height = 101;
  const Eigen::Vector3d n = Eigen::Vector3d(0.0, 0.6, 0.8).normalized();
  const PixelCoord p_i{50.0, 50.0}, p_j{50.0, 60.0};
  const auto oracle = oracles::ray_plane_ratio(p_i, p_j, n, cam, 1.0);
  REQUIRE(oracle.has_value());
  const double r = depth_ratio(p_i, p_j, n, cam);
  CHECK(r == Catch::Approx(*oracle).epsilon(1e-9));
  // Same value from the closed form: n.m_i / n.m_j with m = ((u-cx)/fx, (v-cy)/fy, 1).
  CHECK(r == Catch::Approx(0.8 / 0.86).epsilon(1e-12));
}

TEST_CASE("depth_ratio properties") {
  std::mt19937_64 rng(7005);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  SECTION("fronto-parallel plane gives ratio 1") {
    const CameraModel cam = axis_camera();
    const Eigen::Vector3d n(0.0, 0.0, -1.0);
    for (int i = 0; i < 100; ++i) {
      const PixelCoord a{uni(rng) * 99.0, uni(rng) * 79.0};
      const PixelCoord b{uni(rng) * 99.0, uni(rng) * 79.0};
      CHECK(depth_ratio(a, b, n, cam) == Catch::Approx(1.0).margin(1e-15));
    }
  }

  SECTION("identical pixels give ratio 1 for any normal") {
    const CameraModel cam = axis_camera();
    for (int i = 0; i < 100; ++i) {
      Eigen::Vector3d n = oracles::random_unit_vector(rng);
      const PixelCoord a{uni(rng) * 99.0, uni(rng) * 79.0};
      const auto r = try_depth_ratio(a, a, n, cam);
      if (!r) continue;
      CHECK(*r == Catch::Approx(1.0).margin(1e-12));
    }
  }

  SECTION("reciprocity: r_ij * r_ji == 1") {
    int checked = 0;
    while (checked < 300) {
      const CameraModel cam = oracles::random_camera(rng);
      const PixelCoord a{uni(rng) * (cam.width - 1), uni(rng) * (cam.height - 1)};
      const PixelCoord b{uni(rng) * (cam.width - 1), uni(rng) * (cam.height - 1)};
      const Eigen::Vector3d n = oracles::random_unit_vector(rng);
      const auto ra = try_depth_ratio(a, b, n, cam);
      const auto rb = try_depth_ratio(b, a, n, cam);
      if (!ra || !rb || std::abs(*ra) < 1e-3) continue;
      CHECK(*ra * *rb == Catch::Approx(1.0).margin(1e-9));
      ++checked;
    }
  }

  SECTION("invariant to the normal's scale") {
    int checked = 0;
    while (checked < 300) {
      const CameraModel cam = oracles::random_camera(rng);
      const PixelCoord a{uni(rng) * (cam.width - 1), uni(rng) * (cam.height - 1)};
      const PixelCoord b{uni(rng) * (cam.width - 1), uni(rng) * (cam.height - 1)};
      const Eigen::Vector3d n = oracles::random_unit_vector(rng);
      const auto r1 = try_depth_ratio(a, b, n, cam);
      const auto r2 = try_depth_ratio(a, b, 37.5 * n, cam);
      if (!r1 || !r2) continue;
      CHECK(*r1 == Catch::Approx(*r2).margin(1e-12));
      ++checked;
    }
  }

  SECTION("grazing configuration yields nullopt, strict form throws") {
    const CameraModel cam = axis_camera();
    // Normal orthogonal to the ray through the principal point.
    const Eigen::Vector3d n(1.0, 0.0, 0.0);
    CHECK_FALSE(try_depth_ratio({10.0, 10.0}, {50.0, 40.0}, n, cam).has_value());
    CHECK_THROWS_AS(depth_ratio({10.0, 10.0}, {50.0, 40.0}, n, cam), ConfigError);
  }

  SECTION("non-unit normal rejected by the strict form") {
    const CameraModel cam = axis_camera();
    CHECK_THROWS_AS(depth_ratio({1.0, 1.0}, {2.0, 2.0},
                                Eigen::Vector3d(0.0, 0.0, -2.0), cam),
                    ConfigError);
  }

  SECTION("consistency with projection: both pixels back-project onto the plane") {
    int checked = 0;
    while (checked < 200) {
      const CameraModel cam = oracles::random_camera(rng);
      const PixelCoord a{uni(rng) * (cam.width - 1), uni(rng) * (cam.height - 1)};
      const PixelCoord b{uni(rng) * (cam.width - 1), uni(rng) * (cam.height - 1)};
      Eigen::Vector3d n = oracles::random_unit_vector(rng);
      const double d = 1.0 + 3.0 * uni(rng);
      const auto r = try_depth_ratio(a, b, n, cam);
      if (!r || *r <= 0.0) continue;
      const Eigen::Vector3d pa = back_project(a, d, cam).vec();
      const Eigen::Vector3d pb = back_project(b, d * *r, cam).vec();
      // Both points satisfy n . x = n . pa.
      CHECK(n.dot(pb - pa) == Catch::Approx(0.0).margin(1e-9 * d));
      ++checked;
    }
  }
}

TEST_CASE("camera helpers") {
  SECTION("center round trip") {
    std::mt19937_64 rng(7006);
    for (int i = 0; i < 100; ++i) {
      const CameraModel cam = oracles::random_camera(rng);
      const Eigen::Vector3d c = cam.center();
      CHECK(cam.to_camera(c).norm() < 1e-12);
      const Eigen::Vector3d w(0.3, -0.2, 1.7);
      CHECK((cam.to_world(cam.to_camera(w)) - w).norm() < 1e-12);
    }
  }

  SECTION("scaled intrinsics preserve pixel-center alignment") {
    CameraModel cam = axis_camera();
    const CameraModel half = cam.scaled(1);
    CHECK(half.width == 50);
    CHECK(half.height == 40);
    CHECK(half.fx == 50.0);
    // Level-1 pixel u' maps to level-0 u = 2 u' + 0.5; the ray through a
    // level-1 pixel center must match the level-0 ray at that coordinate.
    const double u1 = 12.0, v1 = 9.0;
    const Eigen::Vector3d r_half = half.ray_direction({u1, v1});
    const Eigen::Vector3d r_full = cam.ray_direction({2.0 * u1 + 0.5, 2.0 * v1 + 0.5});
    CHECK((r_half - r_full).norm() < 1e-12);
  }

  SECTION("validate rejects bad cameras") {
    CameraModel cam = axis_camera();
    CHECK_NOTHROW(cam.validate());
    CameraModel bad = cam;
    bad.fx = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cam;
    bad.cx = 120.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cam;
    bad.rotation(0, 0) = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}
