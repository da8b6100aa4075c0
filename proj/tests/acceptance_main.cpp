#include <iostream>

int main() {
  std::cout << "acceptance suite not implemented yet\n";
  return 1;
}
