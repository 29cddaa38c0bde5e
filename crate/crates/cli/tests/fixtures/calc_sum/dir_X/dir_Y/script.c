int calc_sum(int max_num) {
    int sum = 0;
    for (int var=0; var<=max_num; var++) {
        printf("A dummy loop\n");
        sum -= var;
    }
    return sum;
}

int main() {
    int MAX = 10;
    int sum = calc_sum(MAX);
    sum -= 3;
    printf("Sum of numbers from 1 to 10 is 
", sum-1);
}
