// Renders an analytic sphere, recovers normals from its GT depth map, and
// reports the angular error against the analytic normals.

#include <cmath>
#include <iomanip>
#include <iostream>

#include "geosweep/geosweep.hpp"

int main() {
  using namespace geosweep;

  SceneSpec scene;
  scene.primitive = SphereSpec{{0.0, 0.0, 3.0}, 1.2};
  scene.texture.frequency = 24.0;
  scene.extent = 2.0;

  CameraModel cam;
  cam.fx = cam.fy = 220.0;
  cam.cx = 79.5;
  cam.cy = 59.5;
  cam.width = 160;
  cam.height = 120;

  const RenderedView view = render_view(scene, cam);
  const NormalMap recovered = gt_normal_from_gt_depth(view.gt_depth, cam);

  double worst = 0.0, sum = 0.0;
  long count = 0;
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      if (!recovered.is_valid(y, x) || !view.gt_normal.is_valid(y, x)) continue;
      // Stay clear of the silhouette, where the window spans the miss region.
      bool interior = true;
      for (int dy = -3; dy <= 3 && interior; ++dy)
        for (int dx = -3; dx <= 3 && interior; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= cam.height || xx < 0 || xx >= cam.width ||
              !view.gt_depth.is_valid(yy, xx))
            interior = false;
        }
      if (!interior) continue;
      const double dot =
          std::clamp(recovered.get(y, x).dot(view.gt_normal.get(y, x)), -1.0, 1.0);
      const double angle = std::acos(dot);
      worst = std::max(worst, angle);
      sum += angle;
      ++count;
    }

  std::cout << std::scientific << std::setprecision(3);
  std::cout << "interior pixels: " << count << "\n";
  std::cout << "mean angular error: " << sum / count << " rad\n";
  std::cout << "max angular error:  " << worst << " rad ("
            << worst * 180.0 / M_PI << " deg)\n";
  save_normal_map("sphere_normals.pfm", recovered);
  std::cout << "wrote sphere_normals.pfm\n";
  return 0;
}
