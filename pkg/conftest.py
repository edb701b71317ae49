import os
import sys

# Пакеты проекта импортируются от корня репозитория
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
