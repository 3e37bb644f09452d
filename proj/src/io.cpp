#include "msatl/forge.hpp"
#include "msatl/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <set>
#include <stdexcept>

namespace msatl {

namespace fs = std::filesystem;

std::string to_string(const DomainId& id) {
  if (id.is_target()) return "target";
  return "source_" + std::to_string(id.index);
}

namespace {

bool has_image_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), ::tolower);
  return e == ".png" || e == ".jpg" || e == ".jpeg";
}


MaskU8 read_mask(const fs::path& file, const std::string& stem) {
  cv::Mat gray = cv::imread(file.string(), cv::IMREAD_GRAYSCALE);
  if (gray.empty())
    throw std::runtime_error("failed to read mask: " + file.string());
  MaskU8 mask(gray.rows, gray.cols);
  std::set<int> bad;
  for (int y = 0; y < gray.rows; ++y) {
    const auto* row = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < gray.cols; ++x) {
      if (row[x] == 0)
        mask.at(y, x) = 0;
      else if (row[x] == 255)
        mask.at(y, x) = 1;
      else
        bad.insert(row[x]);
    }
  }
  if (!bad.empty()) {
    std::string vals;
    for (int v : bad) vals += (vals.empty() ? "" : ", ") + std::to_string(v);
    throw std::runtime_error("mask for \"" + stem +
                             "\" has non-binary values {" + vals +
                             "}; expected {0, 255}");
  }
  return mask;
}


void write_mask(const MaskU8& mask, const fs::path& file) {
  cv::Mat gray(mask.h, mask.w, CV_8UC1);
  for (int y = 0; y < mask.h; ++y) {
    auto* row = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < mask.w; ++x) row[x] = mask.at(y, x) ? 255 : 0;
  }
  if (!cv::imwrite(file.string(), gray))
    throw std::runtime_error("failed to write mask: " + file.string());
}

}  // namespace

ImageU8 read_image(const fs::path& file) {
  cv::Mat bgr = cv::imread(file.string(), cv::IMREAD_COLOR);
  if (bgr.empty())
    throw std::runtime_error("failed to read image: " + file.string());
  ImageU8 img(bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      img.at(y, x, 0) = row[x][2];
      img.at(y, x, 1) = row[x][1];
      img.at(y, x, 2) = row[x][0];
    }
  }
  return img;
}

void write_image(const ImageU8& img, const fs::path& file) {
  cv::Mat bgr(img.h, img.w, CV_8UC3);
  for (int y = 0; y < img.h; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.w; ++x) {
      row[x][2] = img.at(y, x, 0);
      row[x][1] = img.at(y, x, 1);
      row[x][0] = img.at(y, x, 2);
    }
  }
  if (!cv::imwrite(file.string(), bgr))
    throw std::runtime_error("failed to write image: " + file.string());
}

DomainDataset load_dataset(const fs::path& root, DomainId domain_id) {
  const fs::path images = root / "images";
  const fs::path masks = root / "masks";
  std::vector<fs::path> files;
  if (fs::is_directory(images))
    for (const auto& e : fs::directory_iterator(images))
      if (e.is_regular_file() && has_image_ext(e.path())) files.push_back(e.path());
  if (files.empty())
    throw std::runtime_error("no samples found in " + root.string());
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
    return a.stem().string() < b.stem().string();
  });

  DomainDataset ds;
  ds.domain_id = domain_id;
  for (const auto& file : files) {
    const std::string stem = file.stem().string();
    const fs::path mask_file = masks / (stem + ".png");
    if (!fs::is_regular_file(mask_file))
      throw std::runtime_error("missing mask for image \"" + stem + "\"");
    DomainSample s;
    s.image = read_image(file);
    s.mask = read_mask(mask_file, stem);
    if (s.mask.h != s.image.h || s.mask.w != s.image.w)
      throw std::runtime_error("mask size mismatch for \"" + stem + "\"");
    s.domain_id = domain_id;
    s.sample_id = stem;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void save_dataset(const DomainDataset& ds, const fs::path& root) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  for (const auto& s : ds.samples) {
    write_image(s.image, root / "images" / (s.sample_id + ".png"));
    write_mask(s.mask, root / "masks" / (s.sample_id + ".png"));
  }
}

std::vector<std::string> list_part_names(const fs::path& root) {
  std::vector<std::string> names;
  if (fs::is_directory(root))
    for (const auto& e : fs::directory_iterator(root))
      if (e.is_directory()) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

PartAnnotation load_parts(const fs::path& root, const std::string& stem) {
  PartAnnotation parts;
  for (const auto& name : list_part_names(root)) {
    const fs::path file = root / name / (stem + ".png");
    if (!fs::is_regular_file(file))
      throw std::runtime_error("missing part mask \"" + name + "\" for \"" +
                               stem + "\"");
    parts.part_masks[name] = read_mask(file, stem + "/" + name);
  }
  if (parts.part_masks.empty())
    throw std::runtime_error("no part directories found in " + root.string());
  return parts;
}

void save_parts(const PartAnnotation& parts, const fs::path& root,
                const std::string& stem) {
  for (const auto& [name, mask] : parts.part_masks) {
    fs::create_directories(root / name);
    write_mask(mask, root / name / (stem + ".png"));
  }
}

void save_toy_corpus(const ToyCorpus& corpus, const fs::path& out) {
  save_dataset(corpus.target, out / "target");
  for (std::size_t j = 0; j < corpus.target_parts.size(); ++j)
    save_parts(corpus.target_parts[j], out / "target" / "parts",
               corpus.target.samples[j].sample_id);
  for (const auto& src : corpus.sources)
    save_dataset(src, out / to_string(src.domain_id));
}

}  // namespace msatl
