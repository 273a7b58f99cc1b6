#include "thbench/geom.hpp"

namespace thbench::geom {
namespace {

// 68-point mean face, x right, y down, z away from the camera (same table as
// assets/canonical_face_68.csv). Recentred on load.
constexpr double kMeanShape[kNumLandmarks][3] = {
    {-70.000000, -17.330445, 51.434823},
    {-68.654970, 2.958050, 40.704855},
    {-64.671567, 17.449828, 30.387234},
    {-58.202873, 29.534967, 20.878460},
    {-49.497475, 39.508926, 12.543950},
    {-38.889916, 47.374633, 5.703994},
    {-26.787840, 53.066456, 0.621449},
    {-13.656323, 56.514439, -2.508367},
    {0.000000, 57.669555, -3.565177},
    {13.656323, 56.514439, -2.508367},
    {26.787840, 53.066456, 0.621449},
    {38.889916, 47.374633, 5.703994},
    {49.497475, 39.508926, 12.543950},
    {58.202873, 29.534967, 20.878460},
    {64.671567, 17.449828, 30.387234},
    {68.654970, 2.958050, 40.704855},
    {70.000000, -17.330445, 51.434823},
    {-58.000000, -54.330445, 8.234823},
    {-47.500000, -58.573086, 7.184823},
    {-37.000000, -60.330445, 6.134823},
    {-26.500000, -58.573086, 5.084823},
    {-16.000000, -54.330445, 4.034823},
    {16.000000, -54.330445, 4.034823},
    {26.500000, -58.573086, 5.084823},
    {37.000000, -60.330445, 6.134823},
    {47.500000, -58.573086, 7.184823},
    {58.000000, -54.330445, 8.234823},
    {0.000000, -40.330445, -11.565177},
    {0.000000, -28.997112, -17.565177},
    {0.000000, -17.663778, -23.565177},
    {0.000000, -6.330445, -29.565177},
    {-14.000000, 1.669555, -10.565177},
    {-7.000000, 1.669555, -14.065177},
    {0.000000, 1.669555, -17.565177},
    {7.000000, 1.669555, -14.065177},
    {14.000000, 1.669555, -10.565177},
    {-47.000000, -34.330445, 0.434823},
    {-38.000000, -39.330445, -2.565177},
    {-28.000000, -39.330445, -2.565177},
    {-19.000000, -34.330445, 0.434823},
    {-28.000000, -29.330445, -2.565177},
    {-38.000000, -29.330445, -2.565177},
    {19.000000, -34.330445, 0.434823},
    {28.000000, -39.330445, -2.565177},
    {38.000000, -39.330445, -2.565177},
    {47.000000, -34.330445, 0.434823},
    {38.000000, -29.330445, -2.565177},
    {28.000000, -29.330445, -2.565177},
    {-25.000000, 27.669555, -9.565177},
    {-21.650635, 32.669555, -10.101075},
    {-12.500000, 36.329809, -11.565177},
    {0.000000, 37.669555, -13.565177},
    {12.500000, 36.329809, -11.565177},
    {21.650635, 32.669555, -10.101075},
    {25.000000, 27.669555, -9.565177},
    {21.650635, 22.669555, -10.101075},
    {12.500000, 19.009301, -11.565177},
    {0.000000, 17.669555, -13.565177},
    {-12.500000, 19.009301, -11.565177},
    {-21.650635, 22.669555, -10.101075},
    {-15.000000, 27.669555, -9.565177},
    {-10.606602, 29.790875, -9.565177},
    {0.000000, 30.669555, -9.565177},
    {10.606602, 29.790875, -9.565177},
    {15.000000, 27.669555, -9.565177},
    {10.606602, 25.548235, -9.565177},
    {0.000000, 24.669555, -9.565177},
    {-10.606602, 25.548235, -9.565177},
};

}  // namespace

const CanonicalFace& CanonicalFace::standard() {
  static const CanonicalFace face = [] {
    Eigen::MatrixXd pts(kNumLandmarks, 3);
    for (int i = 0; i < kNumLandmarks; ++i)
      for (int j = 0; j < 3; ++j) pts(i, j) = kMeanShape[i][j];
    return CanonicalFace::centered(std::move(pts));
  }();
  return face;
}

}  // namespace thbench::geom
