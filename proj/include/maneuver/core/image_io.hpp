#pragma once

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <string>

#include "maneuver/core/error.hpp"
#include "maneuver/core/image.hpp"

namespace maneuver {

// PNG decode via OpenCV. Always returns 3-channel RGB.
inline ImageU8 read_png(const std::string& path) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) io_error("cannot decode image " + path);
  ImageU8 out(bgr.cols, bgr.rows, 3);
  for (int y = 0; y < bgr.rows; ++y) {
    const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      out.at(y, x, 0) = row[x][2];
      out.at(y, x, 1) = row[x][1];
      out.at(y, x, 2) = row[x][0];
    }
  }
  return out;
}

inline void write_png(const std::string& path, const ImageU8& img) {
  require(img.channels == 3, "write_png: expected 3 channels");
  cv::Mat bgr(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width; ++x) {
      row[x][2] = img.at(y, x, 0);
      row[x][1] = img.at(y, x, 1);
      row[x][0] = img.at(y, x, 2);
    }
  }
  if (!cv::imwrite(path, bgr)) io_error("cannot write image " + path);
}

}  // namespace maneuver
