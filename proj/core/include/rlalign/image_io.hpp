#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rlalign/image.hpp"

namespace rlalign {

// IMG1 layout: "RLALIGN1", u32 LE height, u32 LE width, height*width f32 LE.
inline constexpr char kImg1Magic[8] = {'R', 'L', 'A', 'L', 'I', 'G', 'N', '1'};

std::vector<unsigned char> encode_img1(const Image2D& img);
Image2D decode_img1(const std::vector<unsigned char>& bytes);

void write_img1(const std::filesystem::path& path, const Image2D& img);
Image2D read_img1(const std::filesystem::path& path);

// 8-bit binary PGM (P5); [0,255] maps onto [0,1].
Image2D read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Image2D& img);

// Dispatches on the file's leading bytes (IMG1 or P5).
Image2D read_image(const std::filesystem::path& path);

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes);

} // namespace rlalign
