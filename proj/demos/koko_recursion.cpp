// Worst-case environment: cookies of strength 1 everywhere except one weak cookie at 0
// and none at -1. Prints P_{-1}[T_{-k} < T_0] in exact arithmetic next to 1/((k-1)k).

#include <iostream>

#include <cookiewalk/exact.hpp>

int main()
{
    using namespace cookiewalk;
    const auto view = make_environment(EnvironmentSpec::explicit_window(
        {CookieRow{1.0}, CookieRow{1.0, 1.0}}, {{-1, CookieRow{}}, {0, CookieRow{0.9, 1.0}}}));

    std::cout << "k  states  P_-1[T_-k < T_0]  1/((k-1)k)\n";
    for (int k = 2; k <= 10; ++k) {
        const auto chain = build_capped_chain<Rational>(view, -k, 0);
        const Rational p = Rational(1) - solve_hitting_prob(chain, -1).value;
        std::cout << k << "  " << chain.size() << "  " << p << "  " << Rational(1, (k - 1) * k) << '\n';
    }
}
