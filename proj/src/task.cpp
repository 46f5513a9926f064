#include "dinglab/task.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ding {

Vec InpaintingTask::gather_observed(const Vec& x) const {
  Vec out(static_cast<Eigen::Index>(observed.size()));
  for (std::size_t i = 0; i < observed.size(); ++i) out[i] = x[observed[i]];
  return out;
}

void InpaintingTask::scatter_observed(Vec& x, const Vec& values) const {
  for (std::size_t i = 0; i < observed.size(); ++i) x[observed[i]] = values[i];
}

namespace {

std::vector<int> complement(const std::vector<int>& sorted, int d) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(d) - sorted.size());
  std::size_t j = 0;
  for (int i = 0; i < d; ++i) {
    if (j < sorted.size() && sorted[j] == i) {
      ++j;
    } else {
      out.push_back(i);
    }
  }
  return out;
}

}  // namespace

InpaintingTask build_task(const Vec& x_star, const std::vector<int>& masked,
                          double sigma_y) {
  if (!(sigma_y > 0.0))
    throw std::invalid_argument("build_task: sigma_y must be positive");
  const int d = static_cast<int>(x_star.size());
  std::vector<int> m = masked;
  std::sort(m.begin(), m.end());
  m.erase(std::unique(m.begin(), m.end()), m.end());
  if (!m.empty() && (m.front() < 0 || m.back() >= d))
    throw std::invalid_argument("build_task: mask index out of range");

  InpaintingTask task;
  task.d = d;
  task.masked = std::move(m);
  task.observed = complement(task.masked, d);
  task.sigma_y = sigma_y;
  task.x_star = x_star;
  task.y = task.gather_observed(x_star);
  return task;
}

InpaintingTask build_task(const Vec& x_star, const MaskGrid& latent_mask,
                          double sigma_y) {
  const int d = latent_mask.width * latent_mask.height;
  if (d != static_cast<int>(x_star.size()))
    throw std::invalid_argument("build_task: mask size does not match x_star");
  std::vector<int> masked;
  for (int i = 0; i < d; ++i)
    if (!latent_mask.observed[static_cast<std::size_t>(i)]) masked.push_back(i);
  return build_task(x_star, masked, sigma_y);
}

MaskGrid downsample_mask(const PixelMask& pm, int factor, DownsampleMode mode,
                         double threshold) {
  if (factor < 1)
    throw std::invalid_argument("downsample_mask: factor must be >= 1");
  if (!(threshold > 0.0 && threshold <= 1.0))
    throw std::invalid_argument("downsample_mask: threshold must be in (0,1]");

  MaskGrid out;
  if (mode == DownsampleMode::AvgPool) {
    if (pm.width % factor != 0 || pm.height % factor != 0)
      throw std::invalid_argument(
          "downsample_mask: avgpool requires dimensions divisible by factor");
    out.width = pm.width / factor;
    out.height = pm.height / factor;
    out.observed.assign(
        static_cast<std::size_t>(out.width) * out.height, 0);
    for (int r = 0; r < out.height; ++r) {
      for (int c = 0; c < out.width; ++c) {
        int count = 0;
        for (int dr = 0; dr < factor; ++dr)
          for (int dc = 0; dc < factor; ++dc)
            count += pm.at(r * factor + dr, c * factor + dc);
        const double frac =
            static_cast<double>(count) / (static_cast<double>(factor) * factor);
        out.observed[static_cast<std::size_t>(r) * out.width + c] =
            frac >= threshold ? 1 : 0;
      }
    }
    return out;
  }

  // Bilinear with antialiasing: separable triangle filter of half-width
  // `factor`, centered at the back-projected cell center. Weights are
  // nonnegative, so the observed fraction stays monotone in the pixel bits.
  out.width = (pm.width + factor - 1) / factor;
  out.height = (pm.height + factor - 1) / factor;
  out.observed.assign(static_cast<std::size_t>(out.width) * out.height, 0);
  auto weights_1d = [factor](int out_idx, int in_size) {
    const double center = (out_idx + 0.5) * factor - 0.5;
    std::vector<std::pair<int, double>> w;
    const int lo = std::max(0, static_cast<int>(std::ceil(center - factor)));
    const int hi =
        std::min(in_size - 1, static_cast<int>(std::floor(center + factor)));
    double total = 0.0;
    for (int i = lo; i <= hi; ++i) {
      const double wi = 1.0 - std::abs(i - center) / factor;
      if (wi > 0.0) {
        w.emplace_back(i, wi);
        total += wi;
      }
    }
    for (auto& p : w) p.second /= total;
    return w;
  };
  for (int r = 0; r < out.height; ++r) {
    const auto wr = weights_1d(r, pm.height);
    for (int c = 0; c < out.width; ++c) {
      const auto wc = weights_1d(c, pm.width);
      double frac = 0.0;
      for (const auto& [ri, wi] : wr)
        for (const auto& [ci, wj] : wc) frac += wi * wj * pm.at(ri, ci);
      out.observed[static_cast<std::size_t>(r) * out.width + c] =
          frac >= threshold ? 1 : 0;
    }
  }
  return out;
}

double cpsnr(const Vec& x_hat, const InpaintingTask& task, double peak) {
  if (task.observed.empty())
    throw std::domain_error("cpsnr: undefined for an empty observed set");
  if (!task.x_star)
    throw std::invalid_argument("cpsnr: task has no reference x_star");
  const Vec ref = task.gather_observed(*task.x_star);
  const Vec est = task.gather_observed(x_hat);
  if (peak <= 0.0) {
    peak = ref.maxCoeff() - ref.minCoeff();
    if (peak <= 0.0) peak = 1.0;
  }
  const double mse = (est - ref).squaredNorm() / static_cast<double>(ref.size());
  constexpr double kCapDb = 200.0;
  if (mse == 0.0) return kCapDb;
  return std::min(kCapDb, 10.0 * std::log10(peak * peak / mse));
}

namespace {

// Reads the next PGM token, skipping whitespace and '#' comments.
std::string next_pgm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
    } else if (!std::isspace(ch)) {
      tok.push_back(static_cast<char>(ch));
      while ((ch = in.peek()) != EOF && !std::isspace(ch)) {
        tok.push_back(static_cast<char>(in.get()));
      }
      return tok;
    }
  }
  throw std::runtime_error("pgm: unexpected end of file");
}

}  // namespace

PixelMask read_pgm_mask(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("pgm: cannot open " + path);
  const std::string magic = next_pgm_token(in);
  if (magic != "P5" && magic != "P2")
    throw std::runtime_error("pgm: unsupported magic '" + magic + "' in " +
                             path);
  const int width = std::stoi(next_pgm_token(in));
  const int height = std::stoi(next_pgm_token(in));
  const int maxval = std::stoi(next_pgm_token(in));
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535)
    throw std::runtime_error("pgm: bad header in " + path);

  PixelMask mask;
  mask.width = width;
  mask.height = height;
  mask.observed.resize(static_cast<std::size_t>(width) * height);
  const std::size_t n = mask.observed.size();
  if (magic == "P2") {
    for (std::size_t i = 0; i < n; ++i)
      mask.observed[i] = std::stoi(next_pgm_token(in)) >= 128 ? 1 : 0;
  } else {
    in.get();  // single whitespace after maxval
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(n * static_cast<std::size_t>(bytes));
    in.read(reinterpret_cast<char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
    if (!in) throw std::runtime_error("pgm: truncated pixel data in " + path);
    for (std::size_t i = 0; i < n; ++i) {
      const int v = bytes == 1 ? raw[i] : (raw[2 * i] << 8) | raw[2 * i + 1];
      mask.observed[i] = v >= 128 ? 1 : 0;
    }
  }
  return mask;
}

void write_pgm_mask(const std::string& path, const MaskGrid& mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("pgm: cannot write " + path);
  out << "P5\n" << mask.width << " " << mask.height << "\n255\n";
  for (const auto bit : mask.observed)
    out.put(bit ? static_cast<char>(255) : static_cast<char>(0));
}

void write_pgm_image(const std::string& path, const Vec& values, int width,
                     int height) {
  if (static_cast<int>(values.size()) != width * height)
    throw std::invalid_argument("write_pgm_image: size mismatch");
  const double lo = values.minCoeff();
  const double hi = values.maxCoeff();
  const double span = hi > lo ? hi - lo : 1.0;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("pgm: cannot write " + path);
  out << "P5\n" << width << " " << height << "\n255\n";
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const double u = (values[i] - lo) / span;
    out.put(static_cast<char>(
        std::clamp(static_cast<int>(std::lround(u * 255.0)), 0, 255)));
  }
  std::ofstream side(path + ".range.txt");
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.17g %.17g\n", lo, hi);
  side << buf;
}

namespace {

std::string join_doubles(const Vec& v) {
  std::string out;
  char buf[64];
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", v[i]);
    if (i) out += ",";
    out += buf;
  }
  return out;
}

Vec split_doubles(const std::string& s) {
  std::vector<double> vals;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) vals.push_back(std::stod(item));
  }
  Vec v(static_cast<Eigen::Index>(vals.size()));
  for (std::size_t i = 0; i < vals.size(); ++i) v[i] = vals[i];
  return v;
}

}  // namespace

std::string serialize_task(const InpaintingTask& task) {
  std::ostringstream out;
  out << "d " << task.d << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", task.sigma_y);
  out << "sigma_y " << buf << "\n";
  out << "masked ";
  for (std::size_t i = 0; i < task.masked.size(); ++i) {
    if (i) out << ",";
    out << task.masked[i];
  }
  out << "\n";
  out << "y " << join_doubles(task.y) << "\n";
  if (task.x_star) out << "x_star " << join_doubles(*task.x_star) << "\n";
  return out.str();
}

InpaintingTask parse_task(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int d = -1;
  double sigma_y = 0.01;
  std::vector<int> masked;
  Vec y, x_star;
  bool have_x_star = false, have_y = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    std::string rest;
    std::getline(ls, rest);
    if (!rest.empty() && rest[0] == ' ') rest.erase(0, 1);
    if (key == "d") {
      d = std::stoi(rest);
    } else if (key == "sigma_y") {
      sigma_y = std::stod(rest);
    } else if (key == "masked") {
      std::stringstream ss(rest);
      std::string item;
      while (std::getline(ss, item, ','))
        if (!item.empty()) masked.push_back(std::stoi(item));
    } else if (key == "y") {
      y = split_doubles(rest);
      have_y = true;
    } else if (key == "x_star") {
      x_star = split_doubles(rest);
      have_x_star = true;
    } else {
      throw std::invalid_argument("parse_task: unknown key '" + key + "'");
    }
  }
  if (d <= 0) throw std::invalid_argument("parse_task: missing d");
  if (have_x_star) {
    InpaintingTask task = build_task(x_star, masked, sigma_y);
    if (have_y && (task.y - y).lpNorm<Eigen::Infinity>() != 0.0)
      throw std::invalid_argument("parse_task: y inconsistent with x_star");
    return task;
  }
  InpaintingTask task;
  task.d = d;
  std::sort(masked.begin(), masked.end());
  task.masked = masked;
  task.observed = complement(task.masked, d);
  task.sigma_y = sigma_y;
  if (!(sigma_y > 0.0))
    throw std::invalid_argument("parse_task: sigma_y must be positive");
  if (!have_y || static_cast<std::size_t>(y.size()) != task.observed.size())
    throw std::invalid_argument("parse_task: y length mismatch");
  task.y = y;
  return task;
}

void save_task(const std::string& path, const InpaintingTask& task) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_task: cannot write " + path);
  out << serialize_task(task);
}

InpaintingTask load_task(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_task: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_task(ss.str());
}

}  // namespace ding
