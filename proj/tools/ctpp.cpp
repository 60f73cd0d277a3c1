#include <cstdio>
int main() { std::puts("ctpp: placeholder"); return 0; }
