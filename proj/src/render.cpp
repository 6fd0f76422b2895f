#include <tabletop/render.hpp>

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace tabletop {

namespace {

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

// Fixed palette cycled by object index, so colors are stable per scene.
constexpr const char* kFill[] = {"#7fb3d5", "#f5b041", "#82e0aa",
                                 "#d98880", "#c39bd3", "#f7dc6f"};

}  // namespace

std::string render_scene_svg(const Scene& scene) {
  const double canvas_w = 800.0;
  const double margin = 40.0;
  const double scale = (canvas_w - 2.0 * margin) / scene.table_bounds.width();
  const double table_h = scene.table_bounds.height() * scale;
  const double inset_h = scene.held ? 70.0 : 0.0;
  const double canvas_h = table_h + 2.0 * margin + inset_h;

  auto to_x = [&](double x) {
    return margin + (x - scene.table_bounds.min.x()) * scale;
  };
  // Flip y so larger scene y draws toward the top of the image.
  auto to_y = [&](double y) {
    return margin + (scene.table_bounds.max.y() - y) * scale;
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px(canvas_w)
      << "\" height=\"" << px(canvas_h) << "\" viewBox=\"0 0 " << px(canvas_w)
      << " " << px(canvas_h) << "\">\n";
  svg << "  <rect x=\"0\" y=\"0\" width=\"" << px(canvas_w) << "\" height=\""
      << px(canvas_h) << "\" fill=\"#fdfdfd\"/>\n";
  svg << "  <rect x=\"" << px(margin) << "\" y=\"" << px(margin)
      << "\" width=\"" << px(canvas_w - 2.0 * margin) << "\" height=\""
      << px(table_h)
      << "\" fill=\"#efe9dc\" stroke=\"#6d6558\" stroke-width=\"2\"/>\n";

  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& o = scene.objects[i];
    const double cx = to_x(o.pose.translation.x());
    const double cy = to_y(o.pose.translation.y());
    const double r = o.radius() * scale;
    const char* fill = kFill[i % (sizeof(kFill) / sizeof(kFill[0]))];
    svg << "  <circle cx=\"" << px(cx) << "\" cy=\"" << px(cy) << "\" r=\""
        << px(r) << "\" fill=\"" << fill
        << "\" fill-opacity=\"0.85\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
    svg << "  <text x=\"" << px(cx) << "\" y=\"" << px(cy)
        << "\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\""
           " dominant-baseline=\"middle\" fill=\"#1c1c1c\">"
        << o.id << "</text>\n";
  }

  if (scene.held) {
    const double iy = table_h + 2.0 * margin - 10.0;
    svg << "  <rect x=\"" << px(margin) << "\" y=\"" << px(iy) << "\" width=\""
        << px(canvas_w - 2.0 * margin)
        << "\" height=\"50\" fill=\"#e8eef7\" stroke=\"#6d6558\""
           " stroke-width=\"1\"/>\n";
    svg << "  <circle cx=\"" << px(margin + 30.0) << "\" cy=\"" << px(iy + 25.0)
        << "\" r=\"" << px(std::min(20.0, scene.held->diameter * scale / 2.0))
        << "\" fill=\"#f1948a\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
    svg << "  <text x=\"" << px(margin + 60.0) << "\" y=\"" << px(iy + 25.0)
        << "\" font-family=\"monospace\" font-size=\"13\""
           " dominant-baseline=\"middle\" fill=\"#1c1c1c\">held: "
        << scene.held->id << "</text>\n";
  }

  svg << "</svg>\n";
  return svg.str();
}

}  // namespace tabletop
