from statistics import median, stdev

data = [2, 4, 4, 4, 5, 5, 7, 9]
print(median(data), stdev(data))
