#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>

namespace sensprune::cli {

std::string_view default_mnist_mirror();

/// Downloads the four gzipped MNIST files into `dir` and checks each against
/// its published MD5 digest. Files already present with the right digest are
/// kept. Throws std::runtime_error on network or checksum failure.
void fetch_mnist(const std::filesystem::path& dir, const std::string& mirror, std::ostream& log);

/// Lowercase hex MD5 of a file's bytes.
std::string md5_file(const std::filesystem::path& path);

}  // namespace sensprune::cli
