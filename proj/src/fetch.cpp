#include "fetch.h"

#include <array>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <vector>

#ifdef SENSPRUNE_HAVE_FETCH
#include <curl/curl.h>
#include <openssl/evp.h>
#endif

namespace sensprune::cli {

namespace {

struct MnistFile {
  const char* name;
  const char* md5;
};

constexpr std::array<MnistFile, 4> kFiles{{
    {"train-images-idx3-ubyte.gz", "f68b3c2dcbeaaa9fbdd348bbdeb94873"},
    {"train-labels-idx1-ubyte.gz", "d53e105ee54ea40749a09fcbcd1e9432"},
    {"t10k-images-idx3-ubyte.gz", "9fb629c4189551a2d022fa330f9573f3"},
    {"t10k-labels-idx1-ubyte.gz", "ec29112dd5afa0611ce80d1b7f02629c"},
}};

}  // namespace

std::string_view default_mnist_mirror() { return "https://ossci-datasets.s3.amazonaws.com/mnist/"; }

#ifdef SENSPRUNE_HAVE_FETCH

std::string md5_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_md5(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof(byte), "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

namespace {

std::size_t write_to_file(char* data, std::size_t size, std::size_t n, void* stream) {
  auto* out = static_cast<std::ofstream*>(stream);
  out->write(data, static_cast<std::streamsize>(size * n));
  return *out ? size * n : 0;
}

void download(const std::string& url, const std::filesystem::path& dest) {
  std::ofstream out(dest, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(dest.string() + ": cannot open for writing");
  CURL* curl = curl_easy_init();
  if (!curl) throw std::runtime_error("cannot initialise libcurl");
  curl_easy_setopt(curl, CURLOPT_URL, url.c_str());
  curl_easy_setopt(curl, CURLOPT_FOLLOWLOCATION, 1L);
  curl_easy_setopt(curl, CURLOPT_FAILONERROR, 1L);
  curl_easy_setopt(curl, CURLOPT_WRITEFUNCTION, write_to_file);
  curl_easy_setopt(curl, CURLOPT_WRITEDATA, &out);
  const CURLcode rc = curl_easy_perform(curl);
  curl_easy_cleanup(curl);
  if (rc != CURLE_OK) throw std::runtime_error(url + ": " + curl_easy_strerror(rc));
}

}  // namespace

void fetch_mnist(const std::filesystem::path& dir, const std::string& mirror, std::ostream& log) {
  std::filesystem::create_directories(dir);
  std::string base = mirror;
  if (!base.empty() && base.back() != '/') base += '/';
  for (const MnistFile& f : kFiles) {
    const auto dest = dir / f.name;
    if (std::filesystem::exists(dest) && md5_file(dest) == f.md5) {
      log << f.name << ": present, checksum ok\n";
      continue;
    }
    log << f.name << ": downloading from " << base << '\n';
    download(base + f.name, dest);
    const std::string got = md5_file(dest);
    if (got != f.md5) {
      std::filesystem::remove(dest);
      throw std::runtime_error(std::string(f.name) + ": checksum mismatch (got " + got + ", expected " + f.md5 + ")");
    }
    log << f.name << ": checksum ok\n";
  }
}

#else

std::string md5_file(const std::filesystem::path&) {
  throw std::runtime_error("built without checksum support (OpenSSL not found)");
}

void fetch_mnist(const std::filesystem::path&, const std::string&, std::ostream&) {
  throw std::runtime_error("built without download support (libcurl or OpenSSL not found)");
}

#endif

}  // namespace sensprune::cli
