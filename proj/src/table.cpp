#include "microsim/table.hpp"

#include <numeric>

namespace microsim
{

Table Table::columns(std::size_t first, std::size_t count) const
{
    Table out(rows_, count);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < count; ++c)
            out(r, c) = (*this)(r, first + c);
    return out;
}

double Table::sum() const noexcept
{
    return std::accumulate(data_.begin(), data_.end(), 0.0);
}

}  // namespace microsim
