/*
 * Copyright 2026 The ecunlearn Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef ECU_BINARY_IO_HPP
#define ECU_BINARY_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "ecu/error.hpp"

namespace ecu::io {

/// Little-endian byte sink.
class Writer {
  public:
    void bytes(std::string_view data) { buf_.insert(buf_.end(), data.begin(), data.end()); }
    template <typename T>
    void uint(T value) {
        for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
    }
    void f64(double value) { uint(std::bit_cast<std::uint64_t>(value)); }

    const std::string& data() const { return buf_; }

  private:
    std::string buf_;
};

/// Bounds-checked little-endian reader. Running off the end throws FormatError.
class Reader {
  public:
    Reader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

    std::string_view bytes(std::size_t n) {
        need(n);
        auto out = data_.substr(pos_, n);
        pos_ += n;
        return out;
    }
    template <typename T>
    T uint() {
        need(sizeof(T));
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += sizeof(T);
        return static_cast<T>(v);
    }
    double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }

    std::size_t remaining() const { return data_.size() - pos_; }

  private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw FormatError(what_ + ": truncated file");
    }

    std::string_view data_;
    std::size_t pos_ = 0;
    std::string what_;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view data);

}  // namespace ecu::io

#endif  // ECU_BINARY_IO_HPP
