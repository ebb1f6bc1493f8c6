from varimorph import main


if __name__ == "__main__":
    main()
