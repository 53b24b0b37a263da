import torch
import torch.nn as nn

model = nn.Linear(4, 2)
print(model(torch.zeros(4)))
