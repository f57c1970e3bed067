#include <algorithm>
#include <charconv>
#include <sstream>

#include "genpop/cli.hpp"

namespace genpop {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;

std::string fmt(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 2);
  return std::string(buf, end);
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string density_svg(const DensityCurve& sample, const DensityCurve& population, const std::string& title,
                        const std::string& header) {
  const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
  double ymax = 0;
  for (double d : sample.density) ymax = std::max(ymax, d);
  for (double d : population.density) ymax = std::max(ymax, d);
  if (ymax <= 0) ymax = 1;
  ymax *= 1.05;
  auto px = [&](double x) { return kLeft + x * plot_w; };
  auto py = [&](double y) { return kTop + plot_h - y / ymax * plot_h; };

  auto curve = [&](const std::vector<double>& grid, const std::vector<double>& f) {
    std::string d;
    for (std::size_t i = 0; i < grid.size(); ++i)
      d += (i == 0 ? "M" : " L") + fmt(px(grid[i])) + "," + fmt(py(f[i]));
    return d;
  };

  // Shared area: pointwise minimum, closed along the baseline.
  std::vector<double> shared(sample.grid.size());
  for (std::size_t i = 0; i < shared.size(); ++i) shared[i] = std::min(sample.density[i], population.density[i]);
  std::string area = curve(sample.grid, shared);
  area += " L" + fmt(px(sample.grid.back())) + "," + fmt(py(0)) + " L" + fmt(px(sample.grid.front())) + "," +
          fmt(py(0)) + " Z";

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<!-- " << escape(header) << " -->\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
     << "</text>\n"
     << "<path class=\"overlap\" d=\"" << area << "\" fill=\"#9e9e9e\" fill-opacity=\"0.45\" stroke=\"none\"/>\n"
     << "<path class=\"population\" d=\"" << curve(population.grid, population.density)
     << "\" fill=\"none\" stroke=\"#d95f02\" stroke-width=\"1.8\"/>\n"
     << "<path class=\"sample\" d=\"" << curve(sample.grid, sample.density)
     << "\" fill=\"none\" stroke=\"#1b9e77\" stroke-width=\"1.8\"/>\n";

  // axes
  os << "<g stroke=\"black\" stroke-width=\"1\">\n"
     << "<line x1=\"" << fmt(px(0)) << "\" y1=\"" << fmt(py(0)) << "\" x2=\"" << fmt(px(1)) << "\" y2=\"" << fmt(py(0))
     << "\"/>\n"
     << "<line x1=\"" << fmt(px(0)) << "\" y1=\"" << fmt(py(0)) << "\" x2=\"" << fmt(px(0)) << "\" y2=\"" << fmt(kTop)
     << "\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double x = px(t / 5.0);
    os << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(py(0)) << "\" x2=\"" << fmt(x) << "\" y2=\"" << fmt(py(0) + 5)
       << "\"/>\n";
  }
  os << "</g>\n";
  for (int t = 0; t <= 5; ++t)
    os << "<text x=\"" << fmt(px(t / 5.0)) << "\" y=\"" << fmt(py(0) + 18) << "\" text-anchor=\"middle\">"
       << fmt(t / 5.0).substr(0, 3) << "</text>\n";
  os << "<text x=\"" << fmt(kLeft + plot_w / 2) << "\" y=\"" << fmt(kHeight - 10)
     << "\" text-anchor=\"middle\">propensity score</text>\n"
     << "<text x=\"16\" y=\"" << fmt(kTop + plot_h / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << fmt(kTop + plot_h / 2) << ")\">density</text>\n";

  // legend
  const double lx = kWidth - kRight - 150, ly = kTop + 10;
  os << "<line x1=\"" << fmt(lx) << "\" y1=\"" << fmt(ly) << "\" x2=\"" << fmt(lx + 20) << "\" y2=\"" << fmt(ly)
     << "\" stroke=\"#1b9e77\" stroke-width=\"2\"/>\n"
     << "<text x=\"" << fmt(lx + 26) << "\" y=\"" << fmt(ly + 4) << "\">sample</text>\n"
     << "<line x1=\"" << fmt(lx) << "\" y1=\"" << fmt(ly + 18) << "\" x2=\"" << fmt(lx + 20) << "\" y2=\""
     << fmt(ly + 18) << "\" stroke=\"#d95f02\" stroke-width=\"2\"/>\n"
     << "<text x=\"" << fmt(lx + 26) << "\" y=\"" << fmt(ly + 22) << "\">population</text>\n"
     << "<rect x=\"" << fmt(lx) << "\" y=\"" << fmt(ly + 30) << "\" width=\"20\" height=\"10\" fill=\"#9e9e9e\" "
     << "fill-opacity=\"0.45\"/>\n"
     << "<text x=\"" << fmt(lx + 26) << "\" y=\"" << fmt(ly + 40) << "\">overlap</text>\n"
     << "</svg>\n";
  return os.str();
}

}  // namespace genpop
