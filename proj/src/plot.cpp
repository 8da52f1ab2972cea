#include "tagbench/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "tagbench/eval.hpp"

namespace tagbench {

namespace {

struct Box {
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  void add(double x, double y) {
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string render_trajectory_svg(const Trajectory& est_in,
                                  const Trajectory& gt) {
  Trajectory est = est_in;
  std::string caption = "estimate unaligned";
  try {
    const Pose T = rigid_align(est, gt);
    for (auto& s : est) s.pose = T * s.pose;
    caption = "ATE-RMSE " + fmt(ate_rmse(est, gt, false)) + " m";
  } catch (const Error&) {
  }

  Box box;
  for (const auto& s : gt) {
    box.add(s.pose.translation().x(), s.pose.translation().y());
  }
  for (const auto& s : est) {
    box.add(s.pose.translation().x(), s.pose.translation().y());
  }
  if (gt.empty() && est.empty()) box.add(0, 0);
  const double spanx = std::max(box.xmax - box.xmin, 1e-6);
  const double spany = std::max(box.ymax - box.ymin, 1e-6);

  const int W = 900, H = 420, margin = 50;
  const double sx = (W - 2.0 * margin) / spanx;
  const double sy = (H - 2.0 * margin) / spany;
  const double s = std::min(sx, sy);
  auto X = [&](double x) { return margin + (x - box.xmin) * s; };
  auto Y = [&](double y) { return H - margin - (y - box.ymin) * s; };

  auto polyline = [&](const Trajectory& tr, const char* style) {
    std::ostringstream ss;
    ss << "  <polyline fill=\"none\" " << style << " points=\"";
    for (const auto& p : tr) {
      ss << fmt(X(p.pose.translation().x())) << ','
         << fmt(Y(p.pose.translation().y())) << ' ';
    }
    ss << "\"/>\n";
    return ss.str();
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
      << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << ' ' << H
      << "\">\n";
  svg << "  <rect width=\"" << W << "\" height=\"" << H
      << "\" fill=\"white\"/>\n";
  svg << "  <line x1=\"" << margin << "\" y1=\"" << H - margin << "\" x2=\""
      << W - margin << "\" y2=\"" << H - margin
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  svg << "  <line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\""
      << margin << "\" y2=\"" << H - margin
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  svg << polyline(gt, "stroke=\"#888888\" stroke-width=\"3\"");
  svg << polyline(est,
                  "stroke=\"#c0392b\" stroke-width=\"1.5\" "
                  "stroke-dasharray=\"6 3\"");
  svg << "  <text x=\"" << margin << "\" y=\"" << margin - 20
      << "\" font-family=\"monospace\" font-size=\"14\">x [m] vs y [m], "
         "gray = truth, red = estimate, "
      << caption << "</text>\n";
  svg << "  <text x=\"" << W - margin - 60 << "\" y=\"" << H - margin + 30
      << "\" font-family=\"monospace\" font-size=\"12\">x = "
      << fmt(box.xmax) << "</text>\n";
  svg << "  <text x=\"" << margin << "\" y=\"" << H - margin + 30
      << "\" font-family=\"monospace\" font-size=\"12\">x = " << fmt(box.xmin)
      << "</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace tagbench
